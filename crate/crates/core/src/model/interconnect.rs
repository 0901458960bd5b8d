//! Error system, generalized plant and lower LFT closure.

use super::{AffineMatrix, LpvModel, LtiStateSpace};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nalgebra::DMatrix;

/// LPV plant with inputs `[w; u]` and outputs `[z; y]`.
///
/// `w` are exogenous inputs, `u` control inputs, `z` performance outputs and
/// `y` measurements. A controller closes the `y -> u` channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPlant<T: Scalar> {
    pub model: LpvModel<T>,
    pub n_w: usize,
    pub n_u: usize,
    pub n_z: usize,
    pub n_y: usize,
}

impl<T: Scalar> GeneralizedPlant<T> {
    pub fn new(model: LpvModel<T>, n_w: usize, n_u: usize, n_z: usize, n_y: usize) -> Result<Self> {
        if model.n_u() != n_w + n_u || model.n_y() != n_z + n_y {
            return Err(Error::Dimension(format!(
                "plant has {} inputs / {} outputs, channel split is {n_w}+{n_u} / {n_z}+{n_y}",
                model.n_u(),
                model.n_y()
            )));
        }
        Ok(Self {
            model,
            n_w,
            n_u,
            n_z,
            n_y,
        })
    }

    pub fn n_x(&self) -> usize {
        self.model.n_x()
    }

    pub fn b1(&self) -> AffineMatrix<T> {
        self.model.b.sub_block(0, 0, self.n_x(), self.n_w)
    }
    pub fn b2(&self) -> AffineMatrix<T> {
        self.model.b.sub_block(0, self.n_w, self.n_x(), self.n_u)
    }
    pub fn c1(&self) -> AffineMatrix<T> {
        self.model.c.sub_block(0, 0, self.n_z, self.n_x())
    }
    pub fn c2(&self) -> AffineMatrix<T> {
        self.model.c.sub_block(self.n_z, 0, self.n_y, self.n_x())
    }
    pub fn d11(&self) -> AffineMatrix<T> {
        self.model.d.sub_block(0, 0, self.n_z, self.n_w)
    }
    pub fn d12(&self) -> AffineMatrix<T> {
        self.model.d.sub_block(0, self.n_w, self.n_z, self.n_u)
    }
    pub fn d21(&self) -> AffineMatrix<T> {
        self.model.d.sub_block(self.n_z, 0, self.n_y, self.n_w)
    }
    pub fn d22(&self) -> AffineMatrix<T> {
        self.model.d.sub_block(self.n_z, self.n_w, self.n_y, self.n_u)
    }
}

fn check_compatible<T: Scalar>(g: &LpvModel<T>, h: &LpvModel<T>, what: &str) -> Result<()> {
    if g.params != h.params {
        return Err(Error::Dimension(format!("{what}: parameter boxes differ")));
    }
    Ok(())
}

/// Realization of `G - G_red` with stacked state `[x; x_red]`.
pub fn difference<T: Scalar>(g: &LpvModel<T>, g_red: &LpvModel<T>) -> Result<LpvModel<T>> {
    if g.n_u() != g_red.n_u() || g.n_y() != g_red.n_y() {
        return Err(Error::Dimension(format!(
            "difference: G is {}x{}, G_red is {}x{}",
            g.n_y(),
            g.n_u(),
            g_red.n_y(),
            g_red.n_u()
        )));
    }
    check_compatible(g, g_red, "difference")?;
    LpvModel::new(
        AffineMatrix::blockdiag(&g.a, &g_red.a)?,
        AffineMatrix::vstack(&[&g.b, &g_red.b])?,
        AffineMatrix::hstack(&[&g.c, &g_red.c.scale(-T::one())])?,
        g.d.sub(&g_red.d)?,
        g.params.clone(),
    )
}

/// `G_gp = [[G, -I], [I, 0]]`, so that `F_l(G_gp, K) = G - K`.
pub fn generalized_plant<T: Scalar>(g: &LpvModel<T>) -> GeneralizedPlant<T> {
    let (nx, nu, ny, nr) = (g.n_x(), g.n_u(), g.n_y(), g.n_rho());
    let b = AffineMatrix::hstack(&[&g.b, &AffineMatrix::zeros(nx, ny, nr)]).expect("B blocks");
    let c = AffineMatrix::vstack(&[&g.c, &AffineMatrix::zeros(nu, nx, nr)]).expect("C blocks");
    let top = AffineMatrix::hstack(&[&g.d, &AffineMatrix::identity(ny, nr).scale(-T::one())])
        .expect("D top");
    let bottom = AffineMatrix::hstack(&[&AffineMatrix::identity(nu, nr), &AffineMatrix::zeros(nu, ny, nr)])
        .expect("D bottom");
    let d = AffineMatrix::vstack(&[&top, &bottom]).expect("D blocks");
    let model = LpvModel::new(g.a.clone(), b, c, d, g.params.clone()).expect("generalized plant");
    GeneralizedPlant {
        model,
        n_w: nu,
        n_u: ny,
        n_z: ny,
        n_y: nu,
    }
}

fn chain<T: Scalar>(factors: &[&AffineMatrix<T>]) -> Result<AffineMatrix<T>> {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = acc.mul(f)?;
    }
    Ok(acc)
}

/// Closes `y -> u` of `plant` with controller `k`; state is `[x; x_K]`.
///
/// Per-term products are only valid while every product in the closed-loop
/// formulas has at most one parameter-dependent factor; anything else is
/// rejected as [`Error::UnsupportedRational`]. The algebraic loop
/// `(I - D22 D_K)` must be constant and invertible.
pub fn lower_lft<T: Scalar>(plant: &GeneralizedPlant<T>, k: &LpvModel<T>) -> Result<LpvModel<T>> {
    if k.n_u() != plant.n_y || k.n_y() != plant.n_u {
        return Err(Error::Dimension(format!(
            "controller is {}x{}, plant loop channel is {}x{}",
            k.n_y(),
            k.n_u(),
            plant.n_u,
            plant.n_y
        )));
    }
    check_compatible(&plant.model, k, "lower_lft")?;
    let nr = k.n_rho();
    let (d22, dk) = (plant.d22(), &k.d);
    let e = if d22.is_zero() || dk.is_zero() {
        AffineMatrix::identity(plant.n_y, nr)
    } else if d22.is_constant() && dk.is_constant() {
        let m = DMatrix::identity(plant.n_y, plant.n_y) - d22.constant() * dk.constant();
        let inv = m.try_inverse().ok_or(Error::AlgebraicLoop)?;
        if !inv.iter().all(|x| x.is_finite()) {
            return Err(Error::AlgebraicLoop);
        }
        AffineMatrix::from_constant(inv, nr)
    } else {
        return Err(Error::UnsupportedRational(
            "parameter-dependent algebraic loop".into(),
        ));
    };
    let (b1, b2, c1, c2) = (plant.b1(), plant.b2(), plant.c1(), plant.c2());
    let (d11, d12, d21) = (plant.d11(), plant.d12(), plant.d21());
    let dke = dk.mul(&e)?;
    let m1 = AffineMatrix::identity(plant.n_u, nr).add(&chain(&[&dke, &d22])?)?;

    let a11 = plant.model.a.add(&chain(&[&b2, &dke, &c2])?)?;
    let a12 = chain(&[&b2, &m1, &k.c])?;
    let a21 = chain(&[&k.b, &e, &c2])?;
    let a22 = k.a.add(&chain(&[&k.b, &e, &d22, &k.c])?)?;
    let bw1 = b1.add(&chain(&[&b2, &dke, &d21])?)?;
    let bw2 = chain(&[&k.b, &e, &d21])?;
    let cz1 = c1.add(&chain(&[&d12, &dke, &c2])?)?;
    let cz2 = chain(&[&d12, &m1, &k.c])?;
    let dzw = d11.add(&chain(&[&d12, &dke, &d21])?)?;

    LpvModel::new(
        AffineMatrix::vstack(&[
            &AffineMatrix::hstack(&[&a11, &a12])?,
            &AffineMatrix::hstack(&[&a21, &a22])?,
        ])?,
        AffineMatrix::vstack(&[&bw1, &bw2])?,
        AffineMatrix::hstack(&[&cz1, &cz2])?,
        dzw,
        plant.model.params.clone(),
    )
}

/// Frozen counterpart of [`lower_lft`] for a plant with channel split
/// `(n_w, n_u, n_z, n_y)`.
pub fn lower_lft_frozen<T: Scalar>(
    p: &LtiStateSpace<T>,
    split: (usize, usize, usize, usize),
    k: &LtiStateSpace<T>,
) -> Result<LtiStateSpace<T>> {
    let (n_w, n_u, n_z, n_y) = split;
    if p.n_u() != n_w + n_u || p.n_y() != n_z + n_y || k.n_u() != n_y || k.n_y() != n_u {
        return Err(Error::Dimension("frozen lower LFT channel sizes".into()));
    }
    let nx = p.n_x();
    let b1 = p.b.columns(0, n_w);
    let b2 = p.b.columns(n_w, n_u);
    let c1 = p.c.rows(0, n_z);
    let c2 = p.c.rows(n_z, n_y);
    let d11 = p.d.view((0, 0), (n_z, n_w));
    let d12 = p.d.view((0, n_w), (n_z, n_u));
    let d21 = p.d.view((n_z, 0), (n_y, n_w));
    let d22 = p.d.view((n_z, n_w), (n_y, n_u));
    let e = (DMatrix::identity(n_y, n_y) - d22 * &k.d)
        .try_inverse()
        .ok_or(Error::AlgebraicLoop)?;
    let dke = &k.d * &e;
    let m1 = DMatrix::identity(n_u, n_u) + &dke * d22;
    let nk = k.n_x();
    let mut a = DMatrix::zeros(nx + nk, nx + nk);
    a.view_mut((0, 0), (nx, nx)).copy_from(&(&p.a + &b2 * &dke * c2));
    a.view_mut((0, nx), (nx, nk)).copy_from(&(&b2 * &m1 * &k.c));
    a.view_mut((nx, 0), (nk, nx)).copy_from(&(&k.b * &e * c2));
    a.view_mut((nx, nx), (nk, nk)).copy_from(&(&k.a + &k.b * &e * d22 * &k.c));
    let mut b = DMatrix::zeros(nx + nk, n_w);
    b.view_mut((0, 0), (nx, n_w)).copy_from(&(b1 + &b2 * &dke * d21));
    b.view_mut((nx, 0), (nk, n_w)).copy_from(&(&k.b * &e * d21));
    let mut c = DMatrix::zeros(n_z, nx + nk);
    c.view_mut((0, 0), (n_z, nx)).copy_from(&(c1 + d12 * &dke * c2));
    c.view_mut((0, nx), (n_z, nk)).copy_from(&(d12 * &m1 * &k.c));
    let d = d11 + d12 * &dke * d21;
    LtiStateSpace::new(a, b, c, d)
}
