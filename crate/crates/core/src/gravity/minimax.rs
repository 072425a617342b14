use super::simplex::{solve_lp, ConstraintKind, LinearProgram};
use super::{collect, normalize_gauge, GravityFit, GravityMethod, Observations};
use crate::error::Result;
use crate::model::{DistanceMatrix, FlowMatrix};

/// Column layout of the MINIMAX program.
struct Layout {
    n_cities: usize,
    n_obs: usize,
}

impl Layout {
    fn beta(&self) -> usize {
        self.n_cities
    }
    fn ln_k_pos(&self) -> usize {
        self.n_cities + 1
    }
    fn ln_k_neg(&self) -> usize {
        self.n_cities + 2
    }
    fn d_pos(&self, r: usize) -> usize {
        self.n_cities + 3 + 2 * r
    }
    fn d_neg(&self, r: usize) -> usize {
        self.n_cities + 4 + 2 * r
    }
    fn m(&self) -> usize {
        self.n_cities + 3 + 2 * self.n_obs
    }
    fn width(&self) -> usize {
        self.m() + 1
    }
}

fn build(data: &Observations) -> LinearProgram {
    let layout = Layout {
        n_cities: data.cities.len(),
        n_obs: data.obs.len(),
    };
    let w = layout.width();
    let mut names: Vec<String> = data.cities.iter().map(|c| format!("X[{c}]")).collect();
    names.push("beta".into());
    names.push("ln_k+".into());
    names.push("ln_k-".into());
    for o in &data.obs {
        let (a, b) = (&data.cities[o.origin], &data.cities[o.destination]);
        names.push(format!("D1[{a},{b}]"));
        names.push(format!("D2[{a},{b}]"));
    }
    names.push("M".into());

    let mut objective = vec![0.0; w];
    objective[layout.m()] = 1.0;
    let mut lp = LinearProgram::new(names, objective);
    for (r, o) in data.obs.iter().enumerate() {
        // D1 - D2 = X_i + X_j - a_ij * beta - (ln G_ij - ln k)
        let mut row = vec![0.0; w];
        row[layout.d_pos(r)] = 1.0;
        row[layout.d_neg(r)] = -1.0;
        row[o.origin] -= 1.0;
        row[o.destination] -= 1.0;
        row[layout.beta()] = o.ln_distance;
        row[layout.ln_k_pos()] = -1.0;
        row[layout.ln_k_neg()] = 1.0;
        lp.add(row, ConstraintKind::Eq, -o.ln_flow);

        // M - D1 - D2 >= 0
        let mut row = vec![0.0; w];
        row[layout.m()] = 1.0;
        row[layout.d_pos(r)] = -1.0;
        row[layout.d_neg(r)] = -1.0;
        lp.add(row, ConstraintKind::Ge, 0.0);
    }
    lp
}

/// The MINIMAX program for a flow matrix, exposed for inspection and testing.
pub fn minimax_lp(flows: &FlowMatrix, distances: &DistanceMatrix) -> Result<LinearProgram> {
    Ok(build(&collect(flows, distances, 4)?))
}

/// Minimises the largest absolute log-space deviation `|X_i + X_j - beta ln d_ij - ln G_ij + ln k|`.
///
/// Attractions and `beta` are constrained non-negative; `ln k` is a free
/// variable (split into two non-negative parts). Returned attractions are
/// re-centred to sum to zero.
pub fn fit_minimax(flows: &FlowMatrix, distances: &DistanceMatrix) -> Result<GravityFit> {
    let data = collect(flows, distances, 4)?;
    let lp = build(&data);
    let solution = solve_lp(&lp)?;
    let v = solution.values();
    let layout = Layout {
        n_cities: data.cities.len(),
        n_obs: data.obs.len(),
    };
    let mut x: Vec<f64> = v[..layout.n_cities].to_vec();
    let mut ln_k = v[layout.ln_k_pos()] - v[layout.ln_k_neg()];
    normalize_gauge(&mut x, &mut ln_k);
    Ok(GravityFit {
        method: GravityMethod::Minimax,
        beta: v[layout.beta()],
        attractions: data.cities.iter().map(|c| c.to_string()).zip(x).collect(),
        ln_k,
        fit_metric: v[layout.m()],
        excluded_zero_flows: data.excluded_zero,
        n_observations: data.obs.len(),
    })
}
