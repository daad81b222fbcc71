//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured quantities; runtime budgets are part of the check.
//! The tests hold a shared lock so budgets are timed without contention.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use gammaflow::fixtures::{currents, FIXTURES};
use gammaflow_core::currents::ZeroCurrent;
use gammaflow_core::decomposition::{boundary_energy_lower_bound, decompose, lemma_ai_check, verify_bounds, DecompParams};
use gammaflow_core::flat::flat_norm_zero;
use gammaflow_core::geometry::{BoxDomain, Domain, Point};
use gammaflow_core::grid::{deform_to_dual, dual_edge_of, intersection_numbers, shift_acceptance_frequency, GridSpec};
use gammaflow_core::jacobian::{continuity_ratio, face_vorticity_3d, plaquette_vorticity};
use gammaflow_core::lattice::{axis_vortex_3d, cell_fraction, p_energy_weighted, product_vortex, Lattice, ProductVortex};
use gammaflow_core::minimizer::{
    minimize, problem_energy, vortex_sweep, BoundaryDatum, Problem, Shape, SolveOptions, UpdateScheme,
};
use gammaflow_core::recovery::{analytic_rescaled_energy, limsup_sweep_2d, MeshRule, RecoveryPlan};
use gammaflow_core::rng::task_rng;
use rand::Rng;

static LOCK: Mutex<()> = Mutex::new(());

fn report(n: u32, pass: bool, elapsed: Duration, budget: Duration, detail: String) {
    let within = elapsed < budget;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} ({:.1} s of {} s) {detail}", elapsed.as_secs_f64(), budget.as_secs());
    assert!(pass, "criterion {n}: {detail}");
    assert!(within, "criterion {n}: runtime {:.1} s over the {} s budget", elapsed.as_secs_f64(), budget.as_secs());
}

fn centered_lattice(half: f64, h: f64) -> Lattice {
    // the origin is a plaquette center, never a node
    let n = (2.0 * half / h).round() as usize + 2;
    let o = -(n as f64 - 1.0) * h / 2.0;
    Lattice::new(&[n, n], &[o, o], h).unwrap()
}

fn unit_square() -> BoxDomain<f64, 2> {
    BoxDomain::new([0.0, 0.0], [1.0, 1.0]).unwrap()
}

#[test]
fn criterion_01_flat_vortex_energy() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let h = 1.0 / 256.0;
    let src = ProductVortex::new(vec![([0.0, 0.0], 1)], centered_lattice(1.0, h)).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for p in [1.5, 1.9] {
        let w = |c: [f64; 3]| {
            cell_fraction(c, h, 2, 16, |x| {
                let r = x[0].hypot(x[1]);
                r >= 4.0 * h && r < 1.0
            })
        };
        let e = p_energy_weighted(&src, p, false, &w).unwrap();
        let exact = TAU * (1.0 - (4.0 * h).powf(2.0 - p)) / (2.0 - p);
        let rel = e / exact - 1.0;
        pass &= rel.abs() < 0.01;
        detail += &format!("p={p}: {e:.6} vs {exact:.6} (rel {rel:+.2e}); ");
    }
    report(1, pass, t.elapsed(), Duration::from_secs(10), detail);
}

#[test]
fn criterion_02_limsup_constant() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let sigma = currents("three_atom.json").unwrap().zero_current::<2>().unwrap();
    let plan = RecoveryPlan::new(vec![1.2, 1.4, 1.6], MeshRule::CoreResolving);
    let rows = limsup_sweep_2d(&sigma, &unit_square(), &plan).unwrap();
    let in_band = rows.iter().all(|r| (0.75..=1.05).contains(&r.ratio));
    // rows are in increasing p; |ratio - 1| must not increase as p decreases
    let monotone = rows.windows(2).all(|w| (w[0].ratio - 1.0).abs() <= (w[1].ratio - 1.0).abs());
    let exact = rows.iter().all(|r| r.winding_exact);
    let detail = rows.iter().map(|r| format!("p={} h={:.3e} ratio={:.4}; ", r.p, r.h, r.ratio)).collect::<String>()
        + &format!("band {in_band}, monotone {monotone}, winding exact {exact}");
    report(2, in_band && monotone && exact, t.elapsed(), Duration::from_secs(300), detail);
}

fn separated_atoms(rng: &mut impl Rng, count: usize, sep: f64, margin: f64) -> Vec<([f64; 2], i32)> {
    let mut out: Vec<([f64; 2], i32)> = Vec::new();
    while out.len() < count {
        let x = [rng.gen_range(margin..1.0 - margin), rng.gen_range(margin..1.0 - margin)];
        if out.iter().all(|(y, _)| (x[0] - y[0]).hypot(x[1] - y[1]) >= sep) {
            out.push((x, if rng.gen::<bool>() { 1 } else { -1 }));
        }
    }
    out
}

#[test]
fn criterion_03_decomposition() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let dom = unit_square();
    let mut rng = task_rng(2024, 3);
    let (mut structural, mut bounds, mut runs) = (0usize, 0usize, 0usize);
    let mut worst_mass = 0.0f64;
    for i in 0..200 {
        let admissible = i % 2 == 0;
        let count = rng.gen_range(0..=50);
        let atoms = if admissible {
            separated_atoms(&mut rng, count, 0.02, 0.01)
        } else {
            (0..count)
                .map(|_| ([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], if rng.gen::<bool>() { 1 } else { -1 }))
                .filter(|(x, _)| dom.boundary_distance(&Point(*x)) > 0.0)
                .collect()
        };
        let t_cur = ZeroCurrent::from_atoms(atoms.iter().map(|(x, m)| (Point(*x), *m as i64)));
        let params = if admissible {
            DecompParams::new(2, 2.0 - rng.gen_range(1e-3..=3e-3), 0.95).unwrap()
        } else {
            DecompParams::new(2, 1.9, 0.9).unwrap()
        };
        let r = decompose(&t_cur, &dom, &params).unwrap();
        runs += 1;
        let exact = r.x.add(&r.s.boundary(&dom)).same_as(&t_cur);
        let short = r.s.segments().iter().all(|s| s.length() <= r.alpha1);
        let guard = r.trace.len() as i64 <= t_cur.total_mass();
        structural += (exact && short && guard) as usize;
        if admissible {
            let e = analytic_rescaled_energy(&atoms, &dom, params.p, 2.5e-3).unwrap();
            let b = verify_bounds(&r, t_cur.mass(&dom), e, &params).unwrap();
            bounds += b.all_hold() as usize;
            if b.mass_rhs > 0.0 {
                worst_mass = worst_mass.max(b.mass_x / b.mass_rhs);
            }
        }
    }
    let detail = format!("structural {structural}/{runs}, bounds {bounds}/100, max M(X)/(C E) {worst_mass:.3e}");
    report(3, structural == runs && bounds == 100, t.elapsed(), Duration::from_secs(120), detail);
}

fn enumerate_flat(pos: &[Point<f64, 2>], neg: &[Point<f64, 2>], dom: &BoxDomain<f64, 2>) -> f64 {
    fn rec(i: usize, pos: &[Point<f64, 2>], neg: &[Point<f64, 2>], used: &mut Vec<bool>, dom: &BoxDomain<f64, 2>) -> f64 {
        if i == pos.len() {
            return neg.iter().zip(used.iter()).filter(|(_, u)| !**u).map(|(z, _)| dom.boundary_distance(z)).sum();
        }
        let mut best = dom.boundary_distance(&pos[i]) + rec(i + 1, pos, neg, used, dom);
        for j in 0..neg.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(pos[i].dist(&neg[j]) + rec(i + 1, pos, neg, used, dom));
                used[j] = false;
            }
        }
        best
    }
    rec(0, pos, neg, &mut vec![false; neg.len()], dom)
}

#[test]
fn criterion_04_flat_norm_oracle() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let dom = unit_square();
    let mut rng = task_rng(2024, 4);
    let (mut value_ok, mut witness_ok) = (0, 0);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.gen_range(0..=6);
        let atoms: Vec<(Point<f64, 2>, i64)> = (0..n)
            .map(|_| (Point([rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)]), if rng.gen::<bool>() { 1 } else { -1 }))
            .collect();
        let cur = ZeroCurrent::from_atoms(atoms.clone());
        let pos: Vec<_> = atoms.iter().filter(|a| a.1 > 0).map(|a| a.0).collect();
        let neg: Vec<_> = atoms.iter().filter(|a| a.1 < 0).map(|a| a.0).collect();
        let f = flat_norm_zero(&cur, &dom).unwrap();
        let b = enumerate_flat(&pos, &neg, &dom);
        let rel = if b == 0.0 { f.value.abs() } else { (f.value - b).abs() / b };
        worst = worst.max(rel);
        value_ok += (rel <= 1e-9) as usize;
        witness_ok += f.witness.boundary(&dom).same_as(&cur) as usize;
    }
    let detail = format!("value {value_ok}/500 (max rel {worst:.1e}), witness boundary {witness_ok}/500");
    report(4, value_ok == 500 && witness_ok == 500, t.elapsed(), Duration::from_secs(60), detail);
}

#[test]
fn criterion_05_sequence_inequality() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut rng = task_rng(2024, 5);
    let mut min_slack = f64::INFINITY;
    for _ in 0..100_000 {
        let k = rng.gen_range(1..=8);
        let a: Vec<u64> = (0..k).map(|_| rng.gen_range(0..=20)).collect();
        let beta = rng.gen_range(1.0..2.0);
        let lambda = rng.gen_range(0.75..1.0);
        if beta == 1.0 || lambda == 0.75 {
            continue;
        }
        let (lhs, rhs) = lemma_ai_check(&a, beta, lambda).unwrap();
        min_slack = min_slack.min(lhs - rhs);
    }
    report(5, min_slack >= -1e-12, t.elapsed(), Duration::from_secs(10), format!("min slack {min_slack:.3e}"));
}

#[test]
fn criterion_06_boundary_energy_sharpness() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let l = centered_lattice(1.25, 1.0 / 128.0);
    // off the plaquette center, where even degrees would give exact pi jumps
    let c = [0.0013, 0.0007];
    let mut pass = true;
    let mut detail = String::new();
    for d in 1..=3 {
        let f = product_vortex(&[(c, d)], l).unwrap();
        for r in [0.5, 1.0] {
            let (lhs, rhs) = boundary_energy_lower_bound(&f, c, r, 1.5).unwrap();
            let exact = TAU * (d as f64).powf(1.5) * r.powf(-0.5);
            let q = lhs / rhs;
            pass &= (0.99..=1.03).contains(&q) && (rhs / exact - 1.0).abs() < 1e-12;
            detail += &format!("d={d} r={r}: {q:.5}; ");
        }
    }
    report(6, pass, t.elapsed(), Duration::from_secs(30), detail);
}

#[test]
fn criterion_07_vorticity_and_deformation_3d() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let l = Lattice::new(&[17, 17, 17], &[0.0; 3], 1.0 / 16.0).unwrap();
    let chain = face_vorticity_3d(&axis_vortex_3d([0.51, 0.47, 0.5], 2, l).unwrap()).unwrap().current;
    let line = chain.segments()[0].a.0;
    let collinear = chain.segments().iter().all(|s| s.a.0[..2] == line[..2] && s.b.0[..2] == line[..2] && s.mult == 1);
    let inside = |x: &[f64; 3]| x.iter().all(|v| *v > 0.0 && *v < 1.0);
    let closed_inside = chain.boundary_free().atoms().iter().all(|a| !inside(&a.point.0));

    let curve = currents("square_loop.json").unwrap().one_current::<3>().unwrap();
    let grid = GridSpec::new(0.25, [0.0313, 0.0171, 0.0097]).unwrap();
    let v = BoxDomain::new([-1.0; 3], [2.0; 3]).unwrap();
    let deformed = deform_to_dual(&curve, &grid, &v).unwrap();
    let counts = intersection_numbers(&curve, &grid).unwrap();
    let mut carried: BTreeMap<[u64; 6], i64> = BTreeMap::new();
    for s in deformed.segments() {
        let key = [s.a.0, s.b.0].concat().iter().map(|x| x.to_bits()).collect::<Vec<_>>().try_into().unwrap();
        *carried.entry(key).or_default() += s.mult;
    }
    let matches = counts.iter().all(|(face, m)| {
        let (a, b) = dual_edge_of(&grid, face);
        let key: [u64; 6] = [a.0, b.0].concat().iter().map(|x| x.to_bits()).collect::<Vec<_>>().try_into().unwrap();
        carried.get(&key) == Some(m)
    }) && carried.len() == counts.len();
    let loop_closed = deformed.boundary_free().is_zero() && !deformed.is_empty();

    let delta = 0.5;
    let freq = shift_acceptance_frequency(&curve, 0.25, delta, 1000, 7).unwrap();
    let floor = 0.8 * delta / (2.0 + 2.0 * delta);
    let pass = collinear && closed_inside && matches && loop_closed && freq >= floor;
    let detail = format!(
        "axis chain collinear {collinear}, closed inside {closed_inside}; loop closed {loop_closed}, multiplicities = crossings {matches} ({} faces); acceptance {freq:.3} >= {floor:.3}",
        counts.len()
    );
    report(7, pass, t.elapsed(), Duration::from_secs(120), detail);
}

#[test]
fn criterion_08_minimizer() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for d in [1, 2] {
        let datum = BoundaryDatum::new(d, Shape::Disk, 128, 0.0).unwrap();
        let mut opts = SolveOptions::new(1.5);
        opts.scheme = UpdateScheme::Overrelaxed(1.9);
        let sol = minimize(&datum, &opts, None).unwrap();
        let vort = plaquette_vorticity(&sol.field).unwrap();
        let base = datum.problem().unwrap();
        let l = base.lattice;
        let recovery = product_vortex(&[(datum.center(), d)], l).unwrap();
        let rp = Problem::new(l, base.mask.clone(), recovery.phases().unwrap().to_vec()).unwrap();
        let e_rec = problem_energy(&rp, 1.5, false);
        let degree_ok = vort.total() == d as i64;
        let below = sol.report.total <= e_rec;
        pass &= degree_ok && below && sol.converged;
        detail += &format!(
            "d={d}: vorticity {} energy {:.4} <= recovery {:.4} ({} sweeps, converged {}); ",
            vort.total(),
            sol.report.total,
            e_rec,
            sol.sweeps,
            sol.converged
        );
        if d == 1 {
            let c = datum.center();
            let dist = vort
                .current
                .atoms()
                .iter()
                .map(|a| (a.point.0[0] - c[0]).hypot(a.point.0[1] - c[1]))
                .fold(0.0, f64::max);
            let near = vort.current.atoms().len() == 1 && dist <= 3.0 * l.h;
            pass &= near;
            detail += &format!("vortex {:.2} h from the center; ", dist / l.h);
        }
    }
    let datum = BoundaryDatum::new(1, Shape::Disk, 128, 0.0).unwrap();
    let mut opts = SolveOptions::new(1.8);
    opts.scheme = UpdateScheme::Overrelaxed(1.9);
    let (records, _) = vortex_sweep(&datum, &[1.8, 1.6, 1.4], &opts).unwrap();
    // must not decrease as p decreases
    let conc: Vec<f64> = records.iter().map(|r| r.concentration).collect();
    let nondecreasing = conc.windows(2).all(|w| w[1] >= w[0]);
    pass &= nondecreasing;
    detail += &format!("concentration along p = 1.8, 1.6, 1.4: {conc:.4?}, non-decreasing {nondecreasing}");
    report(8, pass, t.elapsed(), Duration::from_secs(300), detail);
}

#[test]
fn criterion_09_jacobian_continuity() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let base: Vec<([f64; 2], i32)> = vec![([-0.1013, 0.0511], 1), ([0.1507, -0.0489], -1)];
    let family: Vec<Vec<([f64; 2], i32)>> = [0.02, 0.05, 0.1]
        .iter()
        .flat_map(|s| {
            [
                vec![([-0.1013 + s, 0.0511], 1), base[1]],
                vec![base[0], ([0.1507, -0.0489 + s], -1)],
                vec![([-0.1013 + s, 0.0511 - s], 1), ([0.1507 - s, -0.0489], -1)],
            ]
        })
        .collect();
    let mut maxima = Vec::new();
    for h in [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
        let l = centered_lattice(0.5, h);
        let u = product_vortex(&base, l).unwrap();
        let m = family
            .iter()
            .map(|c| continuity_ratio(&u, &product_vortex(c, l).unwrap(), 1.5, 3.0).unwrap().ratio)
            .fold(0.0, f64::max);
        maxima.push(m);
    }
    let spread = maxima.iter().cloned().fold(0.0, f64::max) / maxima.iter().cloned().fold(f64::INFINITY, f64::min);
    report(9, spread < 2.0, t.elapsed(), Duration::from_secs(120), format!("max ratios {maxima:.4?}, spread {spread:.3}"));
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn criterion_10_determinism() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    for (f, text) in FIXTURES {
        std::fs::write(dir.path().join(f), text).unwrap();
    }
    let configs = [
        ("sweep", r#"{"experiment":"sweep","sweep":{"target":{"file":"three_atom.json"},"domain":{"lo":[0,0],"hi":[1,1]},"schedule":[1.8,1.6],"mesh":{"kind":"fixed","h":0.00390625}}}"#),
        ("minimize", r#"{"experiment":"minimize","minimize":{"degree":2,"grid":64,"max_sweeps":200,"scheme":{"overrelaxed":1.9}}}"#),
        ("deform", r#"{"experiment":"deform","deform":{"curve":{"file":"square_loop.json"},"ell":0.25,"domain":{"lo":[-1,-1,-1],"hi":[2,2,2]}}}"#),
        ("decompose", r#"{"experiment":"decompose","decompose":{"current":{"file":"three_atom.json"},"domain":{"lo":[0,0],"hi":[1,1]},"p":1.9,"alpha":0.9}}"#),
        ("energy", r#"{"experiment":"energy","energy":{"field":{"product_vortex":{"centers":[{"x":[0.3011,0.4987],"d":1},{"x":[0.7013,0.5021],"d":-1}],"domain":{"lo":[0,0],"hi":[1,1]},"h":0.0078125}},"p":[1.3,1.7],"density":true}}"#),
    ];
    let mut same = Vec::new();
    for (kind, json) in configs {
        let cfg = dir.path().join(format!("{kind}.json"));
        std::fs::write(&cfg, json).unwrap();
        let mut runs = Vec::new();
        for threads in ["1", "8"] {
            let out = dir.path().join(format!("{kind}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_gammaflow"))
                .args([kind, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads, "--seed", "5"])
                .env_remove("GAMMAFLOW_THREADS")
                .status()
                .unwrap();
            assert!(status.success(), "{kind} at {threads} threads");
            runs.push(outputs(&out));
        }
        same.push((kind, !runs[0].is_empty() && runs[0] == runs[1]));
    }
    let pass = same.iter().all(|(_, s)| *s);
    report(10, pass, t.elapsed(), Duration::from_secs(600), format!("byte-identical at 1 and 8 threads: {same:?}"));
}
