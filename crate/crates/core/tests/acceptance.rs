//! End-to-end acceptance criteria at their pinned tolerances. Each test prints
//! one `PASS`/`FAIL` line before asserting.

use std::process::Command;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use magvisc::config::{ConstraintMode, DtPolicy, InitialCondition, SimConfig};
use magvisc::energetics;
use magvisc::gl::{self, GLConfig};
use magvisc::grid::Grid;
use magvisc::integrator;
use magvisc::io;
use magvisc::lab;
use magvisc::stability;

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    println!("criterion {n} [{name}]: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

#[test]
fn criterion_1_identity_suite() {
    let start = Instant::now();
    let r = lab::identity_suite(&[32, 64, 128], 7).unwrap();
    let secs = start.elapsed().as_secs_f64();
    println!("{}", r.table());
    let orders: Vec<String> = r.rows.iter().map(|row| format!("{:.2}/{:.2}", row.orders[0], row.orders[1])).collect();
    let nodal = r.nodal.iter().map(|c| c.residual).fold(0.0, f64::max);
    verdict(
        1,
        "identity suite",
        r.pass() && secs <= 60.0,
        format!("orders {} nodal {nodal:.1e} in {secs:.1}s", orders.join(" ")),
    );
}

#[test]
fn criterion_2_energy_dissipation() {
    let start = Instant::now();
    let mut c = SimConfig::with_grid(&[64, 64]);
    c.mode.constraint = ConstraintMode::Projected;
    c.mode.initial = InitialCondition::Smooth;
    c.time.dt_policy = DtPolicy::Fixed;
    c.time.dt = Some(1e-3);
    c.time.t_end = 2.0;
    c.output.cadence = 1000;
    let s0 = lab::initial_state(&c).unwrap();
    let traj = integrator::run(&c, &s0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let e = &traj.energies;
    let e0 = e[0].total;
    let increase = energetics::first_energy_increase(e, f64::EPSILON * e0);
    let balance = energetics::dissipation_balance(e).unwrap();
    // records 0..=10 cover the first ten steps
    let worst = balance.worst_after(10);
    verdict(
        2,
        "energy dissipation",
        increase.is_none() && worst <= 0.05 && secs <= 300.0,
        format!("first increase {increase:?}, worst balance {worst:.3e} after 10 steps, E {e0:.4} -> {:.3e}, {secs:.0}s", e.last().unwrap().total),
    );
}

fn drift_at_one(mode: ConstraintMode, dt: f64) -> (f64, f64) {
    let mut c = SimConfig::with_grid(&[32, 32]);
    c.mode.constraint = mode;
    c.mode.initial = InitialCondition::Smooth;
    c.time.dt_policy = DtPolicy::Fixed;
    c.time.dt = Some(dt);
    c.time.t_end = 1.0;
    c.output.cadence = 1_000_000;
    let s0 = lab::initial_state(&c).unwrap();
    let traj = integrator::run(&c, &s0).unwrap();
    let every = traj.diagnostics.iter().map(|d| d.constraint_drift).fold(0.0, f64::max);
    (every, traj.diagnostics.last().unwrap().constraint_drift)
}

#[test]
fn criterion_3_constraint_preservation() {
    let (projected, _) = drift_at_one(ConstraintMode::Projected, 2.5e-3);
    let (_, coarse) = drift_at_one(ConstraintMode::Monitored, 1e-2);
    let (_, fine) = drift_at_one(ConstraintMode::Monitored, 5e-3);
    let ratio = coarse / fine;
    verdict(
        3,
        "constraint preservation",
        projected <= 1e-12 && ratio >= 1.8,
        format!("projected max drift {projected:.2e}; monitored drift at t=1 {coarse:.3e} -> {fine:.3e}, ratio {ratio:.3}"),
    );
}

#[test]
fn criterion_4_equilibrium_spectra() {
    let mut worst_re = f64::NEG_INFINITY;
    let mut worst_gap = f64::INFINITY;
    let mut worst_angle: f64 = 0.0;
    let mut all = true;
    let mut slowest: f64 = 0.0;
    let physics = magvisc::Physics::default();
    for (dim, n, seed) in [(2, 16, 11), (3, 8, 12)] {
        let g = Grid::unit(dim, n).unwrap();
        for m_star in lab::random_unit_vectors(seed, 10) {
            let start = Instant::now();
            let op = stability::assemble_linearization(&g, m_star, &physics).unwrap();
            let r = stability::spectrum(&op, Some(seed)).unwrap();
            slowest = slowest.max(start.elapsed().as_secs_f64());
            let k = &r.kernel;
            let ok = r.max_real <= 1e-8
                && r.near_zero_count == 3
                && k.dim_kernel == 3
                && k.dim_kernel_sq == 3
                && k.gap >= 1e2
                && k.gap_sq >= 1e2
                && r.kernel_angle <= 1e-6;
            all &= ok;
            worst_re = worst_re.max(r.max_real);
            worst_gap = worst_gap.min(k.gap.min(k.gap_sq));
            worst_angle = worst_angle.max(r.kernel_angle);
        }
    }
    verdict(
        4,
        "equilibrium spectra",
        all && slowest <= 120.0,
        format!("20 equilibria: max Re {worst_re:.2e}, min singular gap {worst_gap:.2e}, kernel angle {worst_angle:.1e}, slowest {slowest:.1}s"),
    );
}

#[test]
fn criterion_5_normal_stability() {
    let mut c = SimConfig::with_grid(&[16, 16]);
    c.time.dt_policy = DtPolicy::Fixed;
    c.time.dt = Some(1e-3);
    c.time.t_end = 5.0;
    c.time.solver_tol = 1e-13;
    c.output.cadence = 10;
    c.mode.amplitude = 1e-2;
    let o = lab::decay_experiment(&c, 1.0, 1e-12).unwrap();
    let f = &o.decay.fit;
    let ok = o.decay.final_distance <= 1e-6
        && f.r_squared >= 0.99
        && (o.rate_ratio - 1.0).abs() <= 0.2
        && o.decay.m_inf_deviation <= 1e-8;
    verdict(
        5,
        "normal stability",
        ok,
        format!(
            "distance {:.2e}, R^2 {:.6}, rate {:.4} vs gap {:.4}, |m_inf|-1 {:.1e}",
            o.decay.final_distance, f.r_squared, -f.rate, o.spectrum.spectral_gap, o.decay.m_inf_deviation
        ),
    );
}

/// Dense 1D periodic integrator of the semi-implicit projected LLG step
/// `(I - dt (alpha I - beta m^n x) D2) m' = m^n + dt alpha |D1 m^n|^2 m^n`, `m^{n+1} = m'/|m'|`.
fn llg_line(m0: &[[f64; 3]], h: f64, alpha: f64, beta: f64, dt: f64, steps: usize) -> Vec<[f64; 3]> {
    let n = m0.len();
    let mut m = m0.to_vec();
    for _ in 0..steps {
        let mut a = Mat::<f64>::zeros(3 * n, 3 * n);
        let mut b = Mat::<f64>::zeros(3 * n, 1);
        for i in 0..n {
            let (l, r) = ((i + n - 1) % n, (i + 1) % n);
            let mi = m[i];
            // coef = alpha I - beta [m]_x
            let cross = [[0.0, -mi[2], mi[1]], [mi[2], 0.0, -mi[0]], [-mi[1], mi[0], 0.0]];
            let grad2: f64 = (0..3).map(|k| ((m[r][k] - m[l][k]) / (2.0 * h)).powi(2)).sum();
            for p in 0..3 {
                a[(3 * i + p, 3 * i + p)] += 1.0;
                for q in 0..3 {
                    let coef = if p == q { alpha } else { 0.0 } - beta * cross[p][q];
                    let w = dt * coef / (h * h);
                    a[(3 * i + p, 3 * l + q)] -= w;
                    a[(3 * i + p, 3 * r + q)] -= w;
                    a[(3 * i + p, 3 * i + q)] += 2.0 * w;
                }
                b[(3 * i + p, 0)] = mi[p] + dt * alpha * grad2 * mi[p];
            }
        }
        let x = a.partial_piv_lu().solve(&b);
        for i in 0..n {
            let v = [x[(3 * i, 0)], x[(3 * i + 1, 0)], x[(3 * i + 2, 0)]];
            let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            m[i] = [v[0] / s, v[1] / s, v[2] / s];
        }
    }
    m
}

#[test]
fn criterion_6_llg_reduction() {
    let nx = 32;
    let mut c = SimConfig::with_grid(&[nx, 4]);
    c.grid.periodic = true;
    c.mode.constraint = ConstraintMode::Projected;
    c.mode.initial = InitialCondition::Planar;
    c.time.dt_policy = DtPolicy::Fixed;
    c.time.dt = Some(1e-3);
    c.time.t_end = 1.0;
    c.time.solver_tol = 1e-13;
    c.output.cadence = 100;
    let s0 = lab::initial_state(&c).unwrap();
    assert_eq!(s0.u.linf(), 0.0);
    assert_eq!(s0.f.linf(), 0.0);
    let traj = integrator::run(&c, &s0).unwrap();
    let u_max = traj.states.iter().map(|s| s.u.linf()).fold(0.0, f64::max);
    let f_max = traj.states.iter().map(|s| s.f.linf()).fold(0.0, f64::max);
    let end = traj.final_state().unwrap();

    let g = *s0.grid();
    let line: Vec<[f64; 3]> = (0..nx).map(|i| s0.m.node_vec3(g.index([i, 0, 0]))).collect();
    let p = c.physics();
    let oracle = llg_line(&line, g.spacing(0), p.alpha, p.beta, 1e-3, traj.diagnostics.len());
    let mut dev: f64 = 0.0;
    for node in 0..g.node_count() {
        let i = g.multi_index(node)[0];
        let v = end.m.node_vec3(node);
        for k in 0..3 {
            dev = dev.max((v[k] - oracle[i][k]).abs());
        }
    }
    verdict(
        6,
        "LLG reduction",
        u_max <= 1e-9 && f_max <= 1e-9 && dev <= 1e-8 && (end.t - 1.0).abs() < 1e-12,
        format!("|u|_inf {u_max:.1e}, |F|_inf {f_max:.1e}, |m - m_llg|_inf {dev:.2e} at t={}", end.t),
    );
}

#[test]
fn criterion_7_gl_sweep() {
    let mut base = SimConfig::with_grid(&[32, 32]);
    base.mode.initial = InitialCondition::Smooth;
    base.time.t_end = 1.0;
    base.output.cadence = 100;
    let eps = vec![0.2, 0.1, 0.05];
    let glc = GLConfig::new(base.clone(), eps[0], eps.clone()).unwrap();
    let s0 = lab::initial_state(&base).unwrap();
    let sweep = gl::gl_sweep(&glc, &s0).unwrap();

    let g = Grid::unit(2, 16).unwrap();
    let m = lab::smooth_unit_magnetization(&g, 0.8);
    let mut stretched = m.clone();
    for n in 0..g.node_count() {
        let x = g.coords(n);
        let r = 1.0 + 0.3 * (std::f64::consts::PI * x[0]).cos() * (std::f64::consts::PI * x[1]).cos();
        for v in stretched.node_mut(n) {
            *v *= r;
        }
    }
    let entries: Vec<(usize, usize)> = (0..g.node_count()).step_by(5).map(|n| (n, n % 3)).collect();
    let grad_err = eps.iter().map(|&e| gl::gl_gradient_check(&stretched, e, &entries, 1e-6)).fold(0.0, f64::max);

    let positive = lab::caveat_search(&g, 64, 3);
    verdict(
        7,
        "GL sweep",
        sweep.monotone && grad_err <= 1e-4 && positive.is_some(),
        format!(
            "final ||m|-1| {:?}, gradient check {grad_err:.1e}, positive caveat sample {:?}",
            sweep.final_constraint.iter().map(|(e, c)| format!("{e}:{c:.2e}")).collect::<Vec<_>>(),
            positive.map(|p| p.value)
        ),
    );
}

fn write(dir: &std::path::Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn criterion_8_determinism_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[grid]\nextents = [12, 12]\n[time]\nt_end = 0.02\n[output]\ncadence = 5\nsnapshots = true\n[mode]\ninitial = \"smooth\"\nseed = 3\n";
    let path = write(dir.path(), "run.toml", cfg);
    let exe = env!("CARGO_BIN_EXE_magvisc");
    let mut csv = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        let status = Command::new(exe).arg("run").arg(&path).arg("--out").arg(&out).output().unwrap();
        assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
        csv.push(std::fs::read(out.join("energy.csv")).unwrap());
    }
    let identical = csv[0] == csv[1];

    let snap = dir.path().join("out0").join("snapshot_00001.mgvs");
    let bytes = std::fs::read(&snap).unwrap();
    let decoded = io::read_snapshot(&snap).unwrap();
    let re = io::encode_snapshot(&decoded.state, &decoded.physics, decoded.epsilon);
    let round_trip = re == bytes && decoded.state.t > 0.0;

    let cases = [
        ("missing file", vec!["run".to_string(), dir.path().join("missing.toml").display().to_string()]),
        ("negative alpha", vec!["run".into(), write(dir.path(), "neg.toml", "[physics]\nalpha = -1\n[grid]\nextents = [8, 8]\n").display().to_string()]),
        ("unknown key", vec!["run".into(), write(dir.path(), "gamma.toml", "[physics]\ngamma = 2\n[grid]\nextents = [8, 8]\n").display().to_string()]),
        ("malformed number", vec!["run".into(), write(dir.path(), "num.toml", "[grid]\nextents = [8, 8x]\n").display().to_string()]),
    ];
    let mut codes = Vec::new();
    for (name, args) in &cases {
        let out = Command::new(exe).args(args).output().unwrap();
        codes.push((name.to_string(), out.status.code()));
    }
    let exits_ok = codes.iter().all(|(_, c)| *c == Some(2));
    verdict(
        8,
        "determinism and formats",
        identical && round_trip && exits_ok,
        format!("csv identical {identical}, snapshot round trip {round_trip}, exit codes {codes:?}"),
    );
}
