use crate::error::{Error, Result};
use crate::model::{AffineMatrix, LpvModel};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Free/pinned pattern for every affine term of `A`, `B`, `C`, `D`.
///
/// Term `0` is the constant part, term `i` multiplies `rho_i`. `true` marks
/// a free entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureMask {
    pub a: Vec<DMatrix<bool>>,
    pub b: Vec<DMatrix<bool>>,
    pub c: Vec<DMatrix<bool>>,
    pub d: Vec<DMatrix<bool>>,
}

/// Which state-space matrix a free parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Which {
    A,
    B,
    C,
    D,
}

/// One free parameter: matrix, affine term, row, column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub which: Which,
    pub term: usize,
    pub row: usize,
    pub col: usize,
}

fn filled(rows: usize, cols: usize, terms: usize, v: bool) -> Vec<DMatrix<bool>> {
    vec![DMatrix::from_element(rows, cols, v); terms]
}

/// Diagonal blocks `(start, size)` used by the modal pattern: pairs of
/// states, with a trailing single state for odd orders.
pub fn modal_blocks(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(2).map(|s| (s, (n - s).min(2))).collect()
}

impl StructureMask {
    pub fn full(n: usize, n_u: usize, n_y: usize, n_rho: usize) -> Self {
        let t = n_rho + 1;
        Self {
            a: filled(n, n, t, true),
            b: filled(n, n_u, t, true),
            c: filled(n_y, n, t, true),
            d: filled(n_y, n_u, t, true),
        }
    }

    /// Block-diagonal `A` with blocks of size at most 2 in every term;
    /// `B`, `C`, `D` free.
    pub fn modal(n: usize, n_u: usize, n_y: usize, n_rho: usize) -> Self {
        let mut m = Self::full(n, n_u, n_y, n_rho);
        let mut pattern = DMatrix::from_element(n, n, false);
        for (s, k) in modal_blocks(n) {
            pattern.view_mut((s, s), (k, k)).fill(true);
        }
        m.a = vec![pattern; n_rho + 1];
        m
    }

    /// Pins every parameter-dependent term, giving a constant reduced model.
    pub fn parameter_independent(mut self) -> Self {
        for mats in [&mut self.a, &mut self.b, &mut self.c, &mut self.d] {
            for t in mats.iter_mut().skip(1) {
                t.fill(false);
            }
        }
        self
    }

    /// Pins `D` (to the template value, normally the original `D`).
    pub fn pin_d(mut self) -> Self {
        for t in &mut self.d {
            t.fill(false);
        }
        self
    }

    pub fn order(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c[0].nrows()
    }

    pub fn n_rho(&self) -> usize {
        self.a.len() - 1
    }

    fn matrices(&self) -> [(Which, &Vec<DMatrix<bool>>); 4] {
        [(Which::A, &self.a), (Which::B, &self.b), (Which::C, &self.c), (Which::D, &self.d)]
    }

    /// Free parameters in packing order: `A, B, C, D`, then term, then
    /// row-major entries.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        for (which, terms) in self.matrices() {
            for (term, m) in terms.iter().enumerate() {
                for row in 0..m.nrows() {
                    for col in 0..m.ncols() {
                        if m[(row, col)] {
                            out.push(Slot { which, term, row, col });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn n_free(&self) -> usize {
        self.matrices()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.a.len();
        if t == 0 || [&self.b, &self.c, &self.d].iter().any(|m| m.len() != t) {
            return Err(Error::Dimension("structure mask term counts differ".into()));
        }
        let (n, nu, ny) = (self.order(), self.n_u(), self.n_y());
        let dims = [(n, n), (n, nu), (ny, n), (ny, nu)];
        for ((_, terms), (r, c)) in self.matrices().iter().zip(dims) {
            if terms.iter().any(|m| m.shape() != (r, c)) {
                return Err(Error::Dimension("inconsistent structure mask".into()));
            }
        }
        Ok(())
    }

    pub fn check_model<T: Scalar>(&self, m: &LpvModel<T>) -> Result<()> {
        if (m.n_x(), m.n_u(), m.n_y(), m.n_rho()) != (self.order(), self.n_u(), self.n_y(), self.n_rho()) {
            return Err(Error::Dimension(format!(
                "mask is for order {} ({}x{}, {} params), model is order {} ({}x{}, {} params)",
                self.order(),
                self.n_y(),
                self.n_u(),
                self.n_rho(),
                m.n_x(),
                m.n_y(),
                m.n_u(),
                m.n_rho()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MaskJson::from(self)).expect("mask JSON is always serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: MaskJson = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        j.try_into()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskJson {
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<bool>>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<bool>>>,
    #[serde(rename = "C")]
    c: Vec<Vec<Vec<bool>>>,
    #[serde(rename = "D")]
    d: Vec<Vec<Vec<bool>>>,
}

fn nest(terms: &[DMatrix<bool>]) -> Vec<Vec<Vec<bool>>> {
    terms
        .iter()
        .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
        .collect()
}

fn unnest(terms: &[Vec<Vec<bool>>], cols_hint: usize) -> Result<Vec<DMatrix<bool>>> {
    terms
        .iter()
        .map(|rows| {
            let c = rows.first().map_or(cols_hint, Vec::len);
            if rows.iter().any(|r| r.len() != c) {
                return Err(Error::Serialization("ragged mask rows".into()));
            }
            Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
        })
        .collect()
}

impl From<&StructureMask> for MaskJson {
    fn from(m: &StructureMask) -> Self {
        Self {
            a: nest(&m.a),
            b: nest(&m.b),
            c: nest(&m.c),
            d: nest(&m.d),
        }
    }
}

impl TryFrom<MaskJson> for StructureMask {
    type Error = Error;

    fn try_from(j: MaskJson) -> Result<Self> {
        let n = j.a.first().map_or(0, Vec::len);
        let nu = j.d.first().and_then(|t| t.first()).map_or(0, Vec::len);
        let m = Self {
            a: unnest(&j.a, n)?,
            b: unnest(&j.b, nu)?,
            c: unnest(&j.c, n)?,
            d: unnest(&j.d, nu)?,
        };
        if m.a.is_empty() {
            return Err(Error::Serialization("mask needs at least the constant term".into()));
        }
        m.validate()?;
        Ok(m)
    }
}

/// Bijection between the free entries of a masked model and a parameter
/// vector; pinned entries take their values from `template`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameterization<T: Scalar> {
    mask: StructureMask,
    template: LpvModel<T>,
    slots: Vec<Slot>,
}

impl<T: Scalar> Parameterization<T> {
    pub fn new(mask: StructureMask, template: LpvModel<T>) -> Result<Self> {
        mask.validate()?;
        mask.check_model(&template)?;
        let slots = mask.slots();
        Ok(Self { mask, template, slots })
    }

    /// Template with zero pinned values except `D`, which is pinned to `d`.
    pub fn zero_template(mask: StructureMask, d: &AffineMatrix<T>, params: crate::model::ParameterBox<T>) -> Result<Self> {
        let (n, nu, ny, nr) = (mask.order(), mask.n_u(), mask.n_y(), mask.n_rho());
        let template = LpvModel::new(
            AffineMatrix::zeros(n, n, nr),
            AffineMatrix::zeros(n, nu, nr),
            AffineMatrix::zeros(ny, n, nr),
            d.clone(),
            params,
        )?;
        Self::new(mask, template)
    }

    pub fn mask(&self) -> &StructureMask {
        &self.mask
    }

    pub fn template(&self) -> &LpvModel<T> {
        &self.template
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn n_free(&self) -> usize {
        self.slots.len()
    }

    fn matrix(m: &LpvModel<T>, w: Which) -> &AffineMatrix<T> {
        match w {
            Which::A => &m.a,
            Which::B => &m.b,
            Which::C => &m.c,
            Which::D => &m.d,
        }
    }

    fn matrix_mut(m: &mut LpvModel<T>, w: Which) -> &mut AffineMatrix<T> {
        match w {
            Which::A => &mut m.a,
            Which::B => &mut m.b,
            Which::C => &mut m.c,
            Which::D => &mut m.d,
        }
    }

    fn pinned_mismatch(&self, m: &LpvModel<T>) -> Option<(Which, usize, usize, usize)> {
        for (w, terms) in self.mask.matrices() {
            for (k, pattern) in terms.iter().enumerate() {
                let got = Self::matrix(m, w).term(k);
                let want = Self::matrix(&self.template, w).term(k);
                for i in 0..pattern.nrows() {
                    for j in 0..pattern.ncols() {
                        if !pattern[(i, j)] && got[(i, j)] != want[(i, j)] {
                            return Some((w, k, i, j));
                        }
                    }
                }
            }
        }
        None
    }

    /// Free entries of `m`; fails if a pinned entry differs from the template.
    pub fn pack(&self, m: &LpvModel<T>) -> Result<DVector<T>> {
        self.mask.check_model(m)?;
        if let Some((w, k, i, j)) = self.pinned_mismatch(m) {
            return Err(Error::InvalidArgument(format!(
                "model violates the structure mask at {w:?} term {k} entry ({i}, {j})"
            )));
        }
        Ok(DVector::from_iterator(
            self.slots.len(),
            self.slots
                .iter()
                .map(|s| Self::matrix(m, s.which).term(s.term)[(s.row, s.col)]),
        ))
    }

    pub fn unpack(&self, theta: &DVector<T>) -> LpvModel<T> {
        assert_eq!(theta.len(), self.slots.len(), "parameter vector length");
        let mut m = self.template.clone();
        for (s, &v) in self.slots.iter().zip(theta.iter()) {
            Self::matrix_mut(&mut m, s.which).term_mut(s.term)[(s.row, s.col)] = v;
        }
        m
    }

    /// Overwrites the pinned entries of `m` with the template values.
    pub fn project(&self, m: &LpvModel<T>) -> Result<LpvModel<T>> {
        self.mask.check_model(m)?;
        let mut out = self.template.clone();
        for s in &self.slots {
            let v = Self::matrix(m, s.which).term(s.term)[(s.row, s.col)];
            Self::matrix_mut(&mut out, s.which).term_mut(s.term)[(s.row, s.col)] = v;
        }
        Ok(out)
    }
}
