//! Two-dimensional latency/channel Markov chain.
//!
//! States are `S(g, d)` with channel level `g ∈ [0, G)` and delay flag
//! `d ∈ {0, 1}` (`d = 1` means the latency tolerance was exceeded). State
//! `S(g, d)` has index `g + d·G`, so the transition matrix has the block form
//!
//! ```text
//! | K_m  M  |      K_x: tridiagonal, diag 1 − p_g − q_g − x_g,
//! | L    K_l|      super-diagonal p_g, sub-diagonal q_g
//!                  M = diag(m), L = diag(l)
//! ```

use crate::error::{Error, Result};

/// Per-level transition probabilities of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmcParams {
    /// `p[g]`: channel improves from `g` to `g + 1`.
    pub up: Vec<f64>,
    /// `q[g]`: channel degrades from `g` to `g − 1`.
    pub down: Vec<f64>,
    /// `m[g]`: latency becomes violated at level `g`.
    pub violate: Vec<f64>,
    /// `l[g]`: latency recovers at level `g`.
    pub recover: Vec<f64>,
}

impl DtmcParams {
    pub fn levels(&self) -> usize {
        self.up.len()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.up.len();
        if g == 0 || self.down.len() != g || self.violate.len() != g || self.recover.len() != g {
            return Err(Error::InvalidDtmcParams(
                "all parameter vectors must have the same non-zero length".into(),
            ));
        }
        let all = self
            .up
            .iter()
            .chain(&self.down)
            .chain(&self.violate)
            .chain(&self.recover);
        if all.clone().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidDtmcParams("probabilities must lie in [0, 1]".into()));
        }
        if self.up[g - 1] != 0.0 || self.down[0] != 0.0 {
            return Err(Error::InvalidDtmcParams(
                "boundary convention requires p at the top level and q at level 0 to be zero".into(),
            ));
        }
        for lvl in 0..g {
            let base = 1.0 - self.up[lvl] - self.down[lvl];
            let worst = self.violate[lvl].max(self.recover[lvl]);
            // small slack for sums that are 1 up to rounding
            if base - worst < -1e-12 {
                return Err(Error::InvalidDtmcParams(format!(
                    "negative diagonal at level {lvl}: 1 - p - q - x = {}",
                    base - worst
                )));
            }
        }
        Ok(())
    }
}

/// Dense row-stochastic matrix of dimension `2G`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Builds a matrix from raw rows (used by tests and external callers).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidDtmcParams("matrix must be square and non-empty".into()));
        }
        for r in &rows {
            let s: f64 = r.iter().sum();
            if r.iter().any(|&v| v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDtmcParams("rows must be stochastic".into()));
            }
        }
        Ok(Self {
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// `πᵀP`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += w * p;
            }
        }
        out
    }

    fn is_irreducible(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.dim];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(s) = stack.pop() {
                for t in 0..self.dim {
                    let w = if forward { self.get(s, t) } else { self.get(t, s) };
                    if w > 0.0 && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            seen.iter().all(|&x| x)
        };
        reach(true) && reach(false)
    }
}

/// Assembles the block matrix from the per-level probabilities.
pub fn build_transition_matrix(params: &DtmcParams) -> Result<TransitionMatrix> {
    params.validate()?;
    let g = params.levels();
    let dim = 2 * g;
    let mut data = vec![0.0; dim * dim];
    for d in 0..2 {
        let x = if d == 0 { &params.violate } else { &params.recover };
        for lvl in 0..g {
            let row = lvl + d * g;
            let at = |col: usize| row * dim + col;
            let offset = d * g;
            data[at(offset + lvl)] = (1.0 - params.up[lvl] - params.down[lvl] - x[lvl]).max(0.0);
            if lvl + 1 < g {
                data[at(offset + lvl + 1)] = params.up[lvl];
            }
            if lvl > 0 {
                data[at(offset + lvl - 1)] = params.down[lvl];
            }
            // M on the d=0 rows, L on the d=1 rows
            let other = (1 - d) * g + lvl;
            data[at(other)] = x[lvl];
        }
    }
    Ok(TransitionMatrix { dim, data })
}

/// Stationary distribution over the `2G` states.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub pi: Vec<f64>,
}

impl SteadyState {
    pub fn levels(&self) -> usize {
        self.pi.len() / 2
    }
}

/// Solves `(Pᵀ − I)π = 0, 1ᵀπ = 1` by replacing the last balance equation
/// with the normalization row.
pub fn steady_state(matrix: &TransitionMatrix) -> Result<SteadyState> {
    if !matrix.is_irreducible() {
        return Err(Error::ReducibleChain);
    }
    let n = matrix.dim();
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate().take(n - 1) {
        for j in 0..n {
            row[j] = matrix.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    a[n - 1][n] = 1.0;
    let mut pi = solve_augmented(a)?;
    for v in &mut pi {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Ok(SteadyState { pi })
}

fn solve_augmented(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::SingularSystem);
        }
        a.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    Ok(x)
}

/// Stationary mass of the states where latency is under control (`d = 0`).
pub fn latency_ok_mass(state: &SteadyState) -> f64 {
    state.pi[..state.levels()].iter().sum()
}

/// Marginal stationary distribution over channel levels.
pub fn level_marginal(state: &SteadyState) -> Vec<f64> {
    let g = state.levels();
    (0..g).map(|l| state.pi[l] + state.pi[l + g]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_level(m: f64, l: f64) -> DtmcParams {
        DtmcParams {
            up: vec![0.0],
            down: vec![0.0],
            violate: vec![m],
            recover: vec![l],
        }
    }

    #[test]
    fn single_level_matrix() {
        let p = build_transition_matrix(&one_level(0.3, 0.4)).unwrap();
        assert_eq!(p.dim(), 2);
        let expect = [[0.7, 0.3], [0.4, 0.6]];
        for (i, row) in expect.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((p.get(i, j) - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_level_steady_state() {
        let p = build_transition_matrix(&one_level(0.3, 0.4)).unwrap();
        let s = steady_state(&p).unwrap();
        assert!((s.pi[0] - 4.0 / 7.0).abs() < 1e-12);
        assert!((s.pi[1] - 3.0 / 7.0).abs() < 1e-12);
        assert!((latency_ok_mass(&s) - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let p = TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let s = steady_state(&p).unwrap();
        assert!((s.pi[0] - 0.5).abs() < 1e-12 && (s.pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ok_mass_extremes() {
        assert_eq!(latency_ok_mass(&SteadyState { pi: vec![0.2, 0.8, 0.0, 0.0] }), 1.0);
        assert_eq!(latency_ok_mass(&SteadyState { pi: vec![0.0, 0.0, 0.5, 0.5] }), 0.0);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let p = build_transition_matrix(&one_level(0.0, 0.4)).unwrap();
        assert_eq!(steady_state(&p), Err(Error::ReducibleChain));
    }

    #[test]
    fn negative_diagonal_is_rejected() {
        let params = DtmcParams {
            up: vec![0.6, 0.0],
            down: vec![0.0, 0.3],
            violate: vec![0.5, 0.1],
            recover: vec![0.1, 0.1],
        };
        assert!(matches!(
            build_transition_matrix(&params),
            Err(Error::InvalidDtmcParams(_))
        ));
        let boundary = DtmcParams {
            up: vec![0.1, 0.1],
            down: vec![0.0, 0.1],
            violate: vec![0.1, 0.1],
            recover: vec![0.1, 0.1],
        };
        assert!(build_transition_matrix(&boundary).is_err());
    }

    pub(crate) fn params_strategy() -> impl Strategy<Value = DtmcParams> {
        (1usize..=16)
            .prop_flat_map(|g| proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), g))
            .prop_map(|raw| {
                let g = raw.len();
                let mut p = DtmcParams {
                    up: vec![0.0; g],
                    down: vec![0.0; g],
                    violate: vec![0.0; g],
                    recover: vec![0.0; g],
                };
                for (lvl, (a, b, c, d)) in raw.into_iter().enumerate() {
                    // split at most one unit of probability across p, q, x
                    let up = if lvl + 1 < g { a * 0.45 } else { 0.0 };
                    let down = if lvl > 0 { b * 0.45 } else { 0.0 };
                    let room = 1.0 - up - down;
                    p.up[lvl] = up;
                    p.down[lvl] = down;
                    p.violate[lvl] = c * room;
                    p.recover[lvl] = d * room;
                }
                p
            })
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(params in params_strategy()) {
            let m = build_transition_matrix(&params).unwrap();
            for r in 0..m.dim() {
                let s: f64 = m.row(r).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(m.row(r).iter().all(|&v| v >= 0.0));
            }
        }
    }
}
