#![cfg(feature = "parallel")]

use lyapcert::lyapunov::{canonical_member, construct_q0, Q0Options};
use lyapcert::models::{random_stable, upwind_shift, SplitMix64};
use lyapcert::perturb::random_trials;
use lyapcert::resolvent::{verify_bound_right, RightScanOptions};
use lyapcert::semigroup::datko_integral;
use lyapcert::space::{NormModel, RieszMap};

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let a = random_stable(12, 0.5, 7).unwrap();
    let nm = NormModel::identity(12);
    let cand = canonical_member(&a, &nm).unwrap();
    let x = SplitMix64::new(1).complex_vector(12);
    let upwind = upwind_shift(16, 1.0, 1.0).unwrap();
    let x16 = SplitMix64::new(2).complex_vector(16);
    let nm16 = NormModel::identity(16);
    let run = || {
        let q0 = construct_q0(&a, &RieszMap::canonical(&nm), &nm, Q0Options::default()).unwrap();
        let scan = verify_bound_right(&a, &nm, std::slice::from_ref(&cand), RightScanOptions::default()).unwrap();
        let (trials, _) = random_trials(&a, &cand, 2.0, &nm, 20, 3).unwrap();
        let datko = datko_integral(&a, &nm, &x, 1e-12).unwrap() + datko_integral(&upwind, &nm16, &x16, 1e-12).unwrap();
        (q0.candidate.q, scan.norms, scan.worst_ratio, trials.worst_margin_after, datko)
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one, four);
}
