//! Real block-diagonal (modal) coordinates for the modal structure mask.

use super::mask::modal_blocks;
use crate::error::{Error, Result};
use crate::model::LpvModel;
use crate::scalar::Scalar;
use nalgebra::DMatrix;

/// Diagonal blocks `(start, size)` of a real quasi-triangular matrix.
fn schur_blocks<T: Scalar>(t: &DMatrix<T>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let tol = T::lit(1e-12) * (T::one() + t.amax());
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tol {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Solves `a x - x b = c` through its Kronecker form.
fn sylvester<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, q) = c.shape();
    let mut k = DMatrix::zeros(p * q, p * q);
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            for l in 0..p {
                k[(row, j * p + l)] += a[(i, l)];
            }
            for m in 0..q {
                k[(row, m * p + i)] -= b[(m, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("modal decomposition: repeated eigenvalues across blocks".into()))?;
    Ok(DMatrix::from_column_slice(p, q, x.as_slice()))
}

/// Transform `V` (with inverse) such that `V^{-1} A V` is block diagonal with
/// real blocks of size one or two.
fn block_diagonalize<T: Scalar>(a: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>, Vec<(usize, usize)>)> {
    let n = a.nrows();
    let (q, mut t) = a.clone().schur().unpack();
    let blocks = schur_blocks(&t);
    let mut v = q.clone();
    let mut v_inv = q.transpose();
    for &(s, k) in &blocks {
        let rest = n - s - k;
        if rest == 0 {
            break;
        }
        let t11 = t.view((s, s), (k, k)).into_owned();
        let t12 = t.view((s, s + k), (k, rest)).into_owned();
        let t22 = t.view((s + k, s + k), (rest, rest)).into_owned();
        let x = sylvester(&t11, &t22, &(-t12))?;
        // T <- S^{-1} T S with S = [[I, X], [0, I]] on the trailing block
        let mut sm = DMatrix::identity(n, n);
        sm.view_mut((s, s + k), (k, rest)).copy_from(&x);
        let mut sm_inv = DMatrix::identity(n, n);
        sm_inv.view_mut((s, s + k), (k, rest)).copy_from(&(-x));
        t = &sm_inv * &t * &sm;
        t.view_mut((s, s + k), (k, rest)).fill(T::zero());
        v = &v * &sm;
        v_inv = &sm_inv * &v_inv;
    }
    Ok((v, v_inv, blocks))
}

/// Reorders the blocks so they fill the slots of [`modal_blocks`]: two-state
/// blocks each take a slot, single states are paired, and slots are ordered
/// by descending `|B_blk| |C_blk|` of their strongest block.
fn slot_permutation<T: Scalar>(
    blocks: &[(usize, usize)],
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Vec<usize> {
    let score = |&(s, k): &(usize, usize)| {
        b.rows(s, k).norm() * c.columns(s, k).norm()
    };
    let mut singles: Vec<(usize, usize)> = blocks.iter().copied().filter(|b| b.1 == 1).collect();
    singles.sort_by(|x, y| score(y).partial_cmp(&score(x)).unwrap_or(std::cmp::Ordering::Equal));
    let mut slots: Vec<(T, Vec<usize>)> = blocks
        .iter()
        .filter(|b| b.1 == 2)
        .map(|blk| (score(blk), vec![blk.0, blk.0 + 1]))
        .collect();
    let odd = singles.len() % 2 == 1;
    let last = if odd { singles.pop() } else { None };
    for pair in singles.chunks(2) {
        slots.push((score(&pair[0]), vec![pair[0].0, pair[1].0]));
    }
    slots.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut perm: Vec<usize> = slots.into_iter().flat_map(|(_, idx)| idx).collect();
    if let Some(s) = last {
        perm.push(s.0);
    }
    perm
}

/// Transforms `model` to modal coordinates of its constant `A` term and
/// applies the same transform to every affine term. The constant `A` becomes
/// block diagonal on the slots of [`modal_blocks`]; other terms generally
/// still need projecting onto the modal mask.
pub fn modal_form<T: Scalar>(model: &LpvModel<T>) -> Result<LpvModel<T>> {
    let n = model.n_x();
    if n == 0 {
        return Ok(model.clone());
    }
    let (v, v_inv, blocks) = block_diagonalize(model.a.constant())?;
    let b0 = &v_inv * model.b.constant();
    let c0 = model.c.constant() * &v;
    let perm = slot_permutation(&blocks, &b0, &c0);
    debug_assert_eq!(modal_blocks(n).iter().map(|b| b.1).sum::<usize>(), perm.len());
    let p = DMatrix::from_fn(n, n, |i, j| if perm[j] == i { T::one() } else { T::zero() });
    let t = &v * &p;
    let t_inv = p.transpose() * &v_inv;
    Ok(model.similarity(&t, &t_inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LtiStateSpace, ParameterBox};
    use crate::testing::random_stable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn off_block_max(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let mut inside = DMatrix::from_element(n, n, false);
        for (s, k) in modal_blocks(n) {
            inside.view_mut((s, s), (k, k)).fill(true);
        }
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !inside[(i, j)])
            .map(|(i, j)| a[(i, j)].abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn random_systems_become_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..8 {
            let sys = random_stable(&mut rng, n, 2, 1);
            let m = LpvModel::from_lti(&sys, ParameterBox::unit(0));
            let modal = modal_form(&m).unwrap();
            let a = modal.a.constant();
            assert!(off_block_max(a) < 1e-9 * (1.0 + sys.a.amax()), "n = {n}");
            let f = modal.freeze(&[]).unwrap();
            for w in [0.0, 1.0] {
                let d = (sys.freq_response(w).unwrap() - f.freq_response(w).unwrap()).camax();
                assert!(d < 1e-9, "{d}");
            }
        }
    }

    #[test]
    fn strongest_block_first() {
        let sys = LtiStateSpace::new(
            DMatrix::from_diagonal(&nalgebra::dvector![-1.0, -2.0, -3.0]),
            nalgebra::dmatrix![0.01; 1.0; 0.1],
            nalgebra::dmatrix![1.0, 1.0, 1.0],
            nalgebra::dmatrix![0.0],
        )
        .unwrap();
        let modal = modal_form(&LpvModel::from_lti(&sys, ParameterBox::unit(0))).unwrap();
        let diag: Vec<f64> = modal.a.constant().diagonal().iter().copied().collect();
        assert!((diag[0] + 2.0).abs() < 1e-12, "{diag:?}");
        assert!((diag[2] + 1.0).abs() < 1e-12, "{diag:?}");
    }
}
