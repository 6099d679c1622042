//! Characteristic values of a regular pair in the vocabularies of the
//! reduction, strangeness, tractability and dissection frameworks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{Matrix, RankRevealing};
use crate::reduction::ReductionChain;
use crate::{Error, Result};

/// `(r, a, s, d, u)` of one strangeness level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrangenessRow {
    pub r: usize,
    pub a: usize,
    pub s: usize,
    pub d: usize,
    pub u: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strangeness {
    pub mu_s: usize,
    pub rows: Vec<StrangenessRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Characteristics {
    pub m: usize,
    pub mu: usize,
    pub d: usize,
    pub r_list: Vec<usize>,
    pub theta_list: Vec<usize>,
    pub strangeness: Strangeness,
    /// `r^T_0, …, r^T_μ`.
    pub tractability: Vec<usize>,
    /// `r^D_0, …, r^D_μ`.
    pub dissection: Vec<usize>,
}

impl Characteristics {
    /// Fills every table from `m`, the index and the θ profile.
    ///
    /// Index zero has one level with `r = m`; otherwise `θ` has `μ` entries
    /// with only the last one zero.
    pub fn from_profile(m: usize, r: usize, theta: &[usize]) -> Result<Self> {
        let invalid = |msg: &str| {
            Err(Error::InvalidProfile(format!(
                "{msg} (m = {m}, r = {r}, θ = {theta:?})"
            )))
        };
        if theta.is_empty() || *theta.last().unwrap() != 0 {
            return invalid("θ must be nonempty and end in 0");
        }
        if theta.windows(2).any(|w| w[1] > w[0]) {
            return invalid("θ must be nonincreasing");
        }
        if r > m || (r == m && theta.len() > 1) {
            return invalid("rank exceeds the dimension");
        }
        let mut r_list = vec![r];
        for (j, &th) in theta.iter().enumerate().take(theta.len() - 1) {
            let rj = r_list[j];
            if th == 0 || th > rj {
                return invalid("θ_j must be positive before the last level and at most r_j");
            }
            r_list.push(rj - th);
        }
        if r_list.iter().zip(theta).any(|(&rj, &th)| th > m - rj) {
            return invalid("θ_j exceeds the kernel dimension");
        }
        let mu = if r == m { 0 } else { theta.len() };
        let d = *r_list.last().unwrap();
        let (strangeness, tractability) = if mu == 0 {
            (
                Strangeness {
                    mu_s: 0,
                    rows: vec![StrangenessRow {
                        r: m,
                        a: 0,
                        s: 0,
                        d: m,
                        u: 0,
                    }],
                },
                vec![m],
            )
        } else {
            let mut rows = Vec::with_capacity(mu);
            let mut rs = r;
            for &th in theta {
                let row = StrangenessRow {
                    r: rs,
                    a: m - rs - th,
                    s: th,
                    d: rs - th,
                    u: 0,
                };
                rs = row.d;
                rows.push(row);
            }
            let mut rt = vec![r];
            rt.extend(theta.iter().map(|&th| m - th));
            (Strangeness { mu_s: mu - 1, rows }, rt)
        };
        Ok(Self {
            m,
            mu,
            d,
            r_list,
            theta_list: theta.to_vec(),
            strangeness,
            dissection: tractability.clone(),
            tractability,
        })
    }

    /// Jordan block structure of the nilpotent part of a constant pencil
    /// with this profile: `(order, count)` for orders ≥ 2, plus the number of
    /// order-1 blocks.
    pub fn jordan_blocks(&self) -> (Vec<(usize, usize)>, usize) {
        let th = &self.theta_list;
        let mut blocks = Vec::new();
        for j in 0..th.len() {
            let next = th.get(j + 1).copied().unwrap_or(0);
            if th[j] > next {
                blocks.push((j + 2, th[j] - next));
            }
        }
        let nil = self.m - self.d;
        let used: usize = blocks.iter().map(|(o, c)| o * c).sum();
        (blocks, nil - used)
    }
}

/// Characteristics of a regular reduction chain.
pub fn derive_characteristics(m: usize, chain: &ReductionChain) -> Result<Characteristics> {
    if !chain.is_regular() || chain.m != m {
        return Err(Error::NotRegularInput);
    }
    let c = Characteristics::from_profile(m, chain.levels[0].r, &chain.theta_list())?;
    debug_assert_eq!(c.r_list, chain.r_list());
    Ok(c)
}

/// Direct evaluation of `r = rank E`, `a = rank ZᵀFT`, `s = rank VᵀZᵀFT^c`,
/// `d = r − s`, `u = m − r − a − s` at one point.
pub fn strangeness_values_pointwise(e: &Matrix, f: &Matrix, tol: f64) -> StrangenessRow {
    let m = e.nrows();
    let floor = crate::linalg::norm2(&crate::linalg::hstack(e, f));
    let rr_e = RankRevealing::with_floor(e, tol, floor);
    let r = rr_e.rank();
    let t = rr_e.nullspace().into_columns();
    let tc = rr_e.coimage().into_columns();
    let z = rr_e.corange().into_columns();
    let zft = z.transpose() * f * &t;
    let rr_a = RankRevealing::with_floor(&zft, tol, floor);
    let a = rr_a.rank();
    let v = rr_a.corange().into_columns();
    let s = RankRevealing::with_floor(&(v.transpose() * z.transpose() * f * tc), tol, floor).rank();
    StrangenessRow {
        r,
        a,
        s,
        d: r - s,
        u: m.saturating_sub(r + a + s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn index_three_tables() {
        let c = Characteristics::from_profile(7, 6, &[1, 1, 0]).unwrap();
        assert_eq!((c.mu, c.d), (3, 4));
        assert_eq!(c.r_list, vec![6, 5, 4]);
        assert_eq!(c.tractability, vec![6, 6, 6, 7]);
        assert_eq!(c.dissection, c.tractability);
        assert_eq!(c.strangeness.mu_s, 2);
        let rows: Vec<_> = c.strangeness.rows.iter().map(|r| (r.r, r.a, r.s, r.d, r.u)).collect();
        assert_eq!(rows, vec![(6, 0, 1, 5, 0), (5, 1, 1, 4, 0), (4, 3, 0, 4, 0)]);
    }

    #[test]
    fn index_one_and_zero() {
        let c = Characteristics::from_profile(5, 3, &[0]).unwrap();
        assert_eq!((c.mu, c.strangeness.mu_s), (1, 0));
        assert_eq!(
            c.strangeness.rows,
            vec![StrangenessRow {
                r: 3,
                a: 2,
                s: 0,
                d: 3,
                u: 0
            }]
        );
        assert_eq!(c.tractability, vec![3, 5]);
        let c = Characteristics::from_profile(4, 4, &[0]).unwrap();
        assert_eq!((c.mu, c.d, c.tractability.clone()), (0, 4, vec![4]));
        assert_eq!(
            c.strangeness.rows[0],
            StrangenessRow {
                r: 4,
                a: 0,
                s: 0,
                d: 4,
                u: 0
            }
        );
    }

    #[test]
    fn invalid_profiles() {
        assert!(Characteristics::from_profile(3, 2, &[1]).is_err());
        assert!(Characteristics::from_profile(3, 2, &[1, 2, 0]).is_err());
        assert!(Characteristics::from_profile(3, 3, &[1, 0]).is_err());
        assert!(Characteristics::from_profile(3, 1, &[2, 0]).is_err());
    }

    #[test]
    fn jordan_blocks_from_profile() {
        let c = Characteristics::from_profile(8, 6, &[2, 1, 0]).unwrap();
        let (blocks, ones) = c.jordan_blocks();
        assert_eq!(blocks, vec![(2, 1), (3, 1)]);
        assert_eq!(c.d, 3);
        assert_eq!(ones, 0);
    }

    #[test]
    fn pointwise_values_of_simple_pairs() {
        let e = Matrix::identity(3, 3);
        assert_eq!(
            strangeness_values_pointwise(&e, &Matrix::zeros(3, 3), 1e-9),
            StrangenessRow {
                r: 3,
                a: 0,
                s: 0,
                d: 3,
                u: 0
            }
        );
        // E = J₂, F = I: r = 1, θ = 1 ⇒ a = 0, s = 1
        let j2 = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            strangeness_values_pointwise(&j2, &Matrix::identity(2, 2), 1e-9),
            StrangenessRow {
                r: 1,
                a: 0,
                s: 1,
                d: 0,
                u: 0
            }
        );
        // Not pre-regular: [E F] row deficient ⇒ u > 0
        let e = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(strangeness_values_pointwise(&e, &f, 1e-9).u, 1);
    }

    proptest! {
        #[test]
        fn tables_satisfy_their_identities(m in 1usize..10, seed in 0u64..1000) {
            let mut rng = crate::rng::SeededRng::new(seed);
            let r = rng.int(0, m);
            let mut theta = Vec::new();
            let mut rj = r;
            if r < m {
                loop {
                    let cap = rj.min(m - rj).min(theta.last().copied().unwrap_or(usize::MAX));
                    let th = rng.int(0, cap);
                    theta.push(th);
                    if th == 0 { break; }
                    rj -= th;
                }
            } else {
                theta.push(0);
            }
            let c = Characteristics::from_profile(m, r, &theta).unwrap();
            prop_assert_eq!(c.d, *c.r_list.last().unwrap());
            for w in c.r_list.windows(2).zip(&c.theta_list) {
                prop_assert_eq!(w.0[1], w.0[0] - w.1);
            }
            if c.mu > 0 {
                prop_assert_eq!(c.strangeness.mu_s, c.mu - 1);
                prop_assert_eq!(c.tractability.len(), c.mu + 1);
                prop_assert_eq!(*c.tractability.last().unwrap(), m);
                for (i, row) in c.strangeness.rows.iter().enumerate() {
                    prop_assert_eq!(row.s, c.theta_list[i]);
                    prop_assert_eq!(row.r + row.a + row.s + row.u, m);
                    if let Some(next) = c.strangeness.rows.get(i + 1) {
                        prop_assert_eq!(next.r, row.d);
                    }
                }
            }
        }
    }
}
