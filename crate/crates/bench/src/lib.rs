//! Benchmark fixtures shared by the criterion targets.

use nfloc::channel::{observe, Scenario, C64};
use nfloc::estimator::{GridSearcher, GridSpec};

/// Standard scenario at `rho` with one noisy observation.
pub fn fixture(rho: f64) -> (Scenario, Vec<C64>) {
    let s = Scenario::standard(rho, 1.0, 0).expect("standard scenario");
    let y = observe(&s, 1).expect("observation").y;
    (s, y)
}

/// Grid searcher with every range table built.
pub fn warm_searcher(scenario: &Scenario, y: &[C64]) -> GridSearcher {
    let g = GridSearcher::new(scenario, GridSpec::default()).expect("grid searcher");
    g.search(y, &Default::default()).expect("grid search");
    g
}
