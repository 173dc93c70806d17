//! Total-degree Legendre chaos bases, uniform sampling on `[-1, 1]^d` and
//! assembly of the measurement matrix `a_ij = Phi_j(z^i)`.

use std::fmt::{self, Display, Write as _};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default limit on the number of basis functions.
pub const DEFAULT_BASIS_CAP: u128 = 1_000_000;

/// Tolerance on `|t| <= 1` accepted by the polynomial evaluators.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    components: Vec<u32>,
    total: u32,
}

impl MultiIndex {
    pub fn new(components: Vec<u32>) -> Self {
        let total = components.iter().sum();
        Self { components, total }
    }

    pub fn components(&self) -> &[u32] {
        &self.components
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// `sup_z |Phi_alpha(z)| = prod_i sqrt(2 alpha_i + 1)`.
    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|&n| (2.0 * n as f64 + 1.0).sqrt())
            .product()
    }
}

impl Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_char('(')?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_char(',')?;
            }
            write!(f, "{c}")?;
        }
        f.write_char(')')
    }
}

/// `binomial(n, k)` in `u128`, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is always divisible by (i + 1) at this point
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// The total-degree index set `{alpha : |alpha| <= k}` in graded
/// lexicographic order: by total degree first, and within one degree
/// larger leading exponents come first, so `d = 2, k = 2` lists
/// `(0,0) (1,0) (0,1) (2,0) (1,1) (0,2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    d: usize,
    k: u32,
    indices: Vec<MultiIndex>,
}

impl Basis {
    pub fn total_degree(d: usize, k: u32) -> Result<Self> {
        Self::total_degree_capped(d, k, DEFAULT_BASIS_CAP)
    }

    pub fn total_degree_capped(d: usize, k: u32, cap: u128) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("basis dimension must be >= 1".into()));
        }
        let n = binomial(d as u64 + k as u64, k as u64).unwrap_or(u128::MAX);
        if n > cap {
            return Err(Error::Size {
                what: "basis cardinality",
                requested: n,
                cap,
            });
        }
        let mut indices = Vec::with_capacity(n as usize);
        let mut scratch = vec![0u32; d];
        for degree in 0..=k {
            push_compositions(degree, 0, &mut scratch, &mut indices);
        }
        debug_assert_eq!(indices.len() as u128, n);
        Ok(Self { d, k, indices })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// All basis functions at one point, in basis order.
    pub fn eval(&self, z: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.len());
        self.eval_into(z, out.as_mut_slice())?;
        Ok(out)
    }

    fn eval_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        if z.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: z.len(),
                context: "evaluation point",
            });
        }
        let stride = self.k as usize + 1;
        let mut table = vec![0.0; self.d * stride];
        for (i, &zi) in z.iter().enumerate() {
            legendre_table(zi, &mut table[i * stride..(i + 1) * stride])?;
        }
        for (o, alpha) in out.iter_mut().zip(&self.indices) {
            *o = alpha
                .components
                .iter()
                .enumerate()
                .map(|(i, &n)| table[i * stride + n as usize])
                .product();
        }
        Ok(())
    }

    /// `sum_j c_j Phi_j(z)`.
    pub fn eval_expansion(&self, coeffs: &[f64], z: &[f64]) -> Result<f64> {
        if coeffs.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: coeffs.len(),
                context: "expansion coefficients",
            });
        }
        let phi = self.eval(z)?;
        Ok(phi.iter().zip(coeffs).map(|(p, c)| p * c).sum())
    }
}

fn push_compositions(remaining: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex::new(scratch.to_vec()));
        return;
    }
    for v in (0..=remaining).rev() {
        scratch[pos] = v;
        push_compositions(remaining - v, pos + 1, scratch, out);
    }
}

fn check_unit_interval(t: f64) -> Result<()> {
    if t.is_finite() && t.abs() <= 1.0 + DOMAIN_SLACK {
        Ok(())
    } else {
        Err(Error::Domain(format!("Legendre argument {t} outside [-1, 1]")))
    }
}

/// Fills `out[n] = psi_n(t)` for `n = 0..out.len()`, where
/// `psi_n = sqrt(2n + 1) P_n` is orthonormal under the uniform probability
/// density on `[-1, 1]`.
pub fn legendre_table(t: f64, out: &mut [f64]) -> Result<()> {
    check_unit_interval(t)?;
    // (n + 1) P_{n+1} = (2n + 1) t P_n - n P_{n-1}
    let mut prev = 0.0;
    let mut cur = 1.0;
    for (n, o) in out.iter_mut().enumerate() {
        *o = (2.0 * n as f64 + 1.0).sqrt() * cur;
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * t * cur - nf * prev) / (nf + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(())
}

/// Orthonormal Legendre polynomial `psi_n(t)`.
pub fn legendre(n: usize, t: f64) -> Result<f64> {
    let mut table = vec![0.0; n + 1];
    legendre_table(t, &mut table)?;
    Ok(table[n])
}

/// `M` points drawn i.i.d. uniform on `[-1, 1]^d` from a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: DMatrix<f64>,
    seed: u64,
}

impl SampleSet {
    pub fn uniform(d: usize, m: usize, seed: u64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::Domain("sample set needs d >= 1 and M >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // drawn row by row so that a prefix of a larger set is a smaller set
        let mut points = DMatrix::zeros(m, d);
        for i in 0..m {
            for j in 0..d {
                points[(i, j)] = rng.random_range(-1.0..=1.0);
            }
        }
        Ok(Self { points, seed })
    }

    /// Wraps explicit points; every coordinate must lie in `[-1, 1]`.
    pub fn from_points(points: DMatrix<f64>, seed: u64) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::Domain("empty sample set".into()));
        }
        for &v in points.iter() {
            check_unit_interval(v)?;
        }
        Ok(Self { points, seed })
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|j| format!("z{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.points.row_iter() {
            write_row(&mut w, row.iter())?;
        }
        Ok(())
    }
}

/// Dense `M x N` matrix of basis evaluations at the sample points.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    entries: DMatrix<f64>,
    normalized: bool,
    basis: Basis,
    samples: SampleSet,
}

impl MeasurementMatrix {
    /// Rows are evaluated independently, so the result does not depend on
    /// how rayon schedules them.
    pub fn assemble(basis: &Basis, samples: &SampleSet, normalize: bool) -> Result<Self> {
        if basis.dim() != samples.dim() {
            return Err(Error::Dimension {
                expected: basis.dim(),
                got: samples.dim(),
                context: "sample dimension vs basis dimension",
            });
        }
        let m = samples.len();
        let n = basis.len();
        let scale = if normalize { 1.0 / (m as f64).sqrt() } else { 1.0 };
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n];
                basis.eval_into(&samples.point(i), &mut row)?;
                if normalize {
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let entries = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        Ok(Self {
            entries,
            normalized: normalize,
            basis: basis.clone(),
            samples: samples.clone(),
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = self
            .basis
            .indices()
            .iter()
            .map(|alpha| {
                let parts: Vec<String> = alpha.components().iter().map(u32::to_string).collect();
                format!("psi_{}", parts.join("_"))
            })
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.entries.row_iter() {
            write_row(&mut w, row.iter())?;
        }
        Ok(())
    }
}

fn write_row<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut line = String::new();
    for (j, v) in values.enumerate() {
        if j > 0 {
            line.push(',');
        }
        // Display for f64 is the shortest string that round-trips
        write!(line, "{v}").expect("writing to a String cannot fail");
    }
    writeln!(w, "{line}")?;
    Ok(())
}

/// `b_i = f(z^i)`, in sample order. The first failing or non-finite
/// evaluation is reported with its sample index.
pub fn assemble_rhs<F, E>(f: F, samples: &SampleSet) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> std::result::Result<f64, E>,
    E: Display,
{
    let mut b = DVector::zeros(samples.len());
    for i in 0..samples.len() {
        let v = f(&samples.point(i)).map_err(|e| Error::Evaluation {
            index: i,
            reason: e.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::Evaluation {
                index: i,
                reason: format!("non-finite value {v}"),
            });
        }
        b[i] = v;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn cardinalities_from_experiments() {
        assert_eq!(Basis::total_degree(2, 20).unwrap().len(), 231);
        assert_eq!(Basis::total_degree(10, 4).unwrap().len(), 1001);
        assert_eq!(Basis::total_degree(6, 5).unwrap().len(), 462);
    }

    #[test]
    fn small_basis_order() {
        let b = Basis::total_degree(2, 2).unwrap();
        let got: Vec<Vec<u32>> = b.indices().iter().map(|m| m.components().to_vec()).collect();
        assert_eq!(
            got,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn cap_is_enforced() {
        let err = Basis::total_degree_capped(10, 10, 1000).unwrap_err();
        assert!(matches!(err, Error::Size { requested: 184_756, .. }));
        assert!(Basis::total_degree(0, 3).is_err());
        assert!(Basis::total_degree(40, 40).is_err());
    }

    #[test]
    fn degree_zero_basis_is_constant() {
        let b = Basis::total_degree(3, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.eval(&[0.3, -0.2, 0.9]).unwrap()[0], 1.0);
    }

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre(0, 0.37).unwrap(), 1.0);
        assert!((legendre(1, 0.5).unwrap() - 3f64.sqrt() * 0.5).abs() < 1e-15);
        assert!((legendre(2, 1.0).unwrap() - 5f64.sqrt()).abs() < 1e-14);
        assert!(legendre(3, 1.0 + 1e-13).is_ok());
        assert!(legendre(3, 1.01).is_err());
        assert!(legendre(3, f64::NAN).is_err());
    }

    #[test]
    fn eval_basis_examples() {
        let b = Basis::total_degree(2, 3).unwrap();
        assert_eq!(b.eval(&[0.0, 0.0]).unwrap()[0], 1.0);
        let j = b.indices().iter().position(|m| m.components() == [1, 1]).unwrap();
        assert!((b.eval(&[1.0, 1.0]).unwrap()[j] - 3.0).abs() < 1e-14);
        assert!(matches!(b.eval(&[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sup_norm_is_attained_at_corners() {
        let b = Basis::total_degree(2, 3).unwrap();
        let mut best = vec![0.0f64; b.len()];
        let n = 201;
        for i in 0..n {
            for j in 0..n {
                let z = [-1.0 + 2.0 * i as f64 / (n - 1) as f64, -1.0 + 2.0 * j as f64 / (n - 1) as f64];
                for (bst, v) in best.iter_mut().zip(b.eval(&z).unwrap().iter()) {
                    *bst = bst.max(v.abs());
                }
            }
        }
        for (alpha, bst) in b.indices().iter().zip(best) {
            assert!((bst - alpha.sup_norm()).abs() < 1e-12, "{alpha}");
            assert!(alpha.sup_norm() <= 3f64.powi(alpha.total() as i32).sqrt() + 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let a = SampleSet::uniform(3, 50, 9).unwrap();
        let b = SampleSet::uniform(3, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.points().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(a, SampleSet::uniform(3, 50, 10).unwrap());
    }

    #[test]
    fn sample_mean_is_centered() {
        let s = SampleSet::uniform(1, 100_000, 1).unwrap();
        let mean = s.points().iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn matrix_examples() {
        let basis = Basis::total_degree(1, 1).unwrap();
        let samples = SampleSet::from_points(DMatrix::from_row_slice(2, 1, &[0.5, -0.5]), 0).unwrap();
        let a = MeasurementMatrix::assemble(&basis, &samples, false).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let want = DMatrix::from_row_slice(2, 2, &[1.0, h, 1.0, -h]);
        assert!((a.entries() - &want).amax() < 1e-15);
        let an = MeasurementMatrix::assemble(&basis, &samples, true).unwrap();
        assert!((an.entries() - want / 2f64.sqrt()).amax() < 1e-15);
        assert!(an.is_normalized());

        let other = Basis::total_degree(2, 1).unwrap();
        assert!(MeasurementMatrix::assemble(&other, &samples, false).is_err());
    }

    #[test]
    fn constant_column_is_ones() {
        let basis = Basis::total_degree(3, 2).unwrap();
        let samples = SampleSet::uniform(3, 7, 4).unwrap();
        let a = MeasurementMatrix::assemble(&basis, &samples, false).unwrap();
        assert!(a.entries().column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rhs_examples() {
        let samples = SampleSet::uniform(2, 3, 0).unwrap();
        let b = assemble_rhs(|_| Ok::<_, Infallible>(1.0), &samples).unwrap();
        assert_eq!(b.as_slice(), &[1.0, 1.0, 1.0]);

        let one = SampleSet::from_points(DMatrix::from_row_slice(1, 1, &[0.5]), 0).unwrap();
        let b = assemble_rhs(|z| legendre(1, z[0]), &one).unwrap();
        assert!((b[0] - 3f64.sqrt() / 2.0).abs() < 1e-15);

        let err = assemble_rhs(
            |z| if z[0] > 0.0 { Err("positive") } else { Ok(0.0) },
            &SampleSet::from_points(DMatrix::from_row_slice(3, 1, &[-0.5, -0.1, 0.4]), 0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Evaluation { index: 2, .. }));
    }

    #[test]
    fn rhs_of_expansion_is_matrix_product() {
        let basis = Basis::total_degree(3, 3).unwrap();
        let samples = SampleSet::uniform(3, 12, 77).unwrap();
        let a = MeasurementMatrix::assemble(&basis, &samples, false).unwrap();
        let x = DVector::from_fn(basis.len(), |i, _| ((i * 7 % 5) as f64 - 2.0) * 0.3);
        let b = assemble_rhs(|z| basis.eval_expansion(x.as_slice(), z), &samples).unwrap();
        assert!((a.entries() * &x - b).amax() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let basis = Basis::total_degree(2, 1).unwrap();
        let samples = SampleSet::from_points(DMatrix::from_row_slice(1, 2, &[0.1, -0.25]), 0).unwrap();
        let a = MeasurementMatrix::assemble(&basis, &samples, false).unwrap();
        let mut out = Vec::new();
        a.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "psi_0_0,psi_1_0,psi_0_1");
        let vals: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(vals.as_slice(), a.entries().row(0).iter().copied().collect::<Vec<_>>().as_slice());

        let mut out = Vec::new();
        samples.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "z1,z2\n0.1,-0.25\n");
    }
}
