use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use wrcouple::field::{CoreLaw, TransformerLite};
use wrcouple::io::Problem;
use wrcouple::monolithic::solve_monolithic;
use wrcouple::netlist::{parse_netlist, Netlist};
use wrcouple::solver::{integrate_circuit, uniform_grid};
use wrcouple::wr::gauss_seidel_wr;
use wrcouple::{MnaSystem, SolveOptions, Waveform, WrOptions, WrStatus};

fn benchmarks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

fn benchmark(file: &str) -> Netlist {
    parse_netlist(&std::fs::read_to_string(benchmarks().join(file)).unwrap()).unwrap()
}

fn problem(file: &str, field: Option<&str>) -> Problem {
    let overrides: BTreeMap<String, String> = field.map(|f| ("EM".to_string(), f.to_string())).into_iter().collect();
    Problem::build(benchmark(file), &benchmarks(), &overrides).unwrap()
}

fn qv(t: f64) -> f64 {
    t.sin() + (20.0 * t).sin()
}

fn qi(t: f64) -> f64 {
    (2.0 * t).sin() + 5.0 * (20.0 * t).sin()
}

#[test]
fn circuit_a_without_field_current_matches_hand_recursion() {
    // With i_m = 0 the benchmark reduces to scalar recursions:
    // e3 = −q_v, i_L = q_i, (e3 − e2)' = e2 − i_L across C and R,
    // e4 = e2 + 5 i_L' across the inductor.
    let sys = MnaSystem::from_netlist(&benchmark("circuit_a.net"));
    let dt = 1e-2;
    let grid = uniform_grid(0.0, 0.8, dt).unwrap();
    let zero = Waveform::constant(grid.clone(), &DVector::zeros(1)).unwrap();
    let tr = integrate_circuit(&sys, &zero, &DVector::zeros(sys.dim()), &grid, &SolveOptions::default()).unwrap();
    let rows = ["n2", "n3", "n4"].map(|n| sys.node_row(n).unwrap());
    let (mut e2, mut e3) = (0.0, 0.0);
    for k in 1..grid.len() {
        let (t, t_old) = (grid[k], grid[k - 1]);
        let e3_new = -qv(t);
        e2 = ((e3_new - e3 + e2) / dt + qi(t)) / (1.0 + 1.0 / dt);
        e3 = e3_new;
        let e4 = e2 + 5.0 * (qi(t) - qi(t_old)) / dt;
        let x = tr.x.row(k);
        for (row, want) in rows.iter().zip([e2, e3, e4]) {
            assert!((x[*row] - want).abs() <= 1e-12 * (1.0 + want.abs()), "t = {t}: {} vs {want}", x[*row]);
        }
    }
}

#[test]
fn equivalent_inductance_converges_quadratically_without_core() {
    // The air-only variant has smooth coefficients, so the mesh error is O(h²).
    let l_eq = |n: usize| {
        let cfg = TransformerLite { n, core: CoreLaw::Linear { mu_r: 1.0 }, ..TransformerLite::default() };
        cfg.build().unwrap().equivalent_inductance().unwrap()[(0, 0)]
    };
    let l: Vec<f64> = [33, 65, 129].map(l_eq).to_vec();
    let ratio = (l[0] - l[1]) / (l[1] - l[2]);
    assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}, values {l:?}");
}

#[test]
fn equivalent_inductance_refines_with_core() {
    let l_eq = |n: usize| {
        let cfg = TransformerLite { n, ..TransformerLite::default() };
        cfg.build().unwrap().equivalent_inductance().unwrap()[(0, 0)]
    };
    let l: Vec<f64> = [17, 33, 65].map(l_eq).to_vec();
    // Conforming elements are too stiff, so L_eq grows towards its limit.
    assert!(l[0] < l[1] && l[1] < l[2], "{l:?}");
    let ratio = (l[0] - l[1]) / (l[1] - l[2]);
    assert!(ratio > 2.0, "ratio {ratio}");
}

#[test]
fn convergent_benchmark_contracts_and_matches_monolithic() {
    let p = problem("circuit_a.net", None);
    let opts = WrOptions::default();
    let wr = gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &opts).unwrap();
    assert!(matches!(wr.status, WrStatus::Converged(k) if k <= 20), "{:?}", wr.status);
    let d = wr.deltas();
    assert!(d.windows(2).skip(1).all(|w| w[1] <= w[0]), "{d:?}");
    let grid = uniform_grid(0.0, 0.8, 1e-2).unwrap();
    let mono = solve_monolithic(&p.field, &p.circuit, &p.x0, &p.a0, &grid, &opts.circuit).unwrap();
    let last = wr.final_iterate().unwrap();
    let gap = last.x.sup_diff(&mono.x).unwrap();
    assert!(gap <= 10.0 * opts.wr_tol, "gap {gap}");
    // The second iterate is already close to the coupled solution.
    let second = &wr.windows[0].iterates[1];
    assert!(second.x.sup_diff(&mono.x).unwrap() <= 1e-2 * mono.x.sup_norm());
}

#[test]
fn divergent_benchmark_blows_up_but_monolithic_stays_bounded() {
    let p = problem("circuit_b.net", None);
    let opts = WrOptions::default();
    let wr = gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &opts).unwrap();
    assert!(matches!(wr.status, WrStatus::Diverged(_)), "{:?}", wr.status);
    assert!(wr.windows[0].contraction_ratios().iter().skip(1).all(|r| *r > 1.5));
    let grid = uniform_grid(0.0, 0.8, 1e-2).unwrap();
    let mono = solve_monolithic(&p.field, &p.circuit, &p.x0, &p.a0, &grid, &opts.circuit).unwrap();
    assert!(mono.x.is_finite());
    assert!(mono.x.sup_norm() < 1e3, "{}", mono.x.sup_norm());
}

#[test]
fn windowing_agrees_with_single_window() {
    let p = problem("circuit_a.net", None);
    let one = gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &WrOptions::default()).unwrap();
    let four =
        gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &WrOptions { windows: 4, ..WrOptions::default() }).unwrap();
    assert_eq!(four.windows.len(), 4);
    assert!(matches!(four.status, WrStatus::Converged(_)));
    let a = one.final_iterate().unwrap().x.last();
    let b = four.final_iterate().unwrap().x.last();
    assert!((&a - &b).norm() <= 1e-6 * a.norm(), "{a} vs {b}");
}

#[test]
fn low_memory_keeps_two_iterates_with_same_answer() {
    let p = problem("circuit_a.net", None);
    let full = gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &WrOptions::default()).unwrap();
    let lean =
        gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &WrOptions { low_memory: true, ..WrOptions::default() })
            .unwrap();
    assert_eq!(full.status, lean.status);
    assert!(lean.windows[0].iterates.len() <= 2);
    assert_eq!(full.final_iterate().unwrap().x, lean.final_iterate().unwrap().x);
}

#[test]
fn eddy_currents_and_saturation_variants_converge() {
    for field in ["transformer-lite-eddy", "transformer-lite-brauer"] {
        let p = problem("circuit_a.net", Some(field));
        let opts = WrOptions::default();
        let wr = gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &opts).unwrap();
        assert!(matches!(wr.status, WrStatus::Converged(_)), "{field}: {:?}", wr.status);
        let grid = uniform_grid(0.0, 0.8, 1e-2).unwrap();
        let mono = solve_monolithic(&p.field, &p.circuit, &p.x0, &p.a0, &grid, &opts.circuit).unwrap();
        let gap = wr.final_iterate().unwrap().x.sup_diff(&mono.x).unwrap();
        assert!(gap <= 10.0 * opts.wr_tol, "{field}: gap {gap}");
    }
}

#[test]
fn lumped_one_dof_field_diverges_faster_on_circuit_b() {
    // L_eq = 1/2 against L = 5 amplifies each sweep roughly tenfold.
    let p = problem("circuit_b.net", Some("one-dof"));
    let wr = gauss_seidel_wr(&p.field, &p.circuit, &p.x0, &p.a0, &WrOptions::default()).unwrap();
    assert!(matches!(wr.status, WrStatus::Diverged(_)));
    let ratios = wr.windows[0].contraction_ratios();
    assert!(ratios.iter().skip(1).all(|r| (r - 10.0).abs() < 1.0), "{ratios:?}");
}
