//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{ex2, ex3, ex4, ex5, pure, three, two_spin};
use parisi::kernels::{bracket, chain_profile, h, h_arg, hbar, r1, r2};
use parisi::solver::{rsb_dual_forms, solve_frsb, solve_rsb};
use parisi::{
    classify, condition_kappa, minimize_cs, two_component_boundaries, verify_parisi, Chain, ClassifyOptions,
    Error, HBar, Mixture, OracleOptions, ParisiMeasure, PhaseKind, PhaseLabel, Tolerances, ZArg,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: failures collected as messages, plus a summary.
struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { failures: vec![], notes: vec![] }
    }

    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn hb(spec: &Mixture, w: HBar, x1: f64, x2: f64) -> f64 {
    hbar(spec, w, x1, x2).unwrap_or(f64::NAN)
}

fn example_two(c: &mut Check) {
    let spec = ex2();
    match classify(&spec, &ClassifyOptions::default()) {
        Ok(r) => {
            c.expect(r.label == PhaseLabel::rsb(3), format!("classified as {}", r.label));
            c.note(format!("{} energy {:.10}", r.label, r.energy));
        }
        Err(e) => c.expect(false, format!("classify: {e}")),
    }
    let chain = [0.0, 0.9345, 0.975, 1.0];
    let rep = condition_kappa(&spec, &chain, 1e-10);
    c.expect(rep.satisfied, "chain not in H^3");
    // block by block: Z-side positive/negative, Y-side the opposite
    let signs = [(1.0, -1.0), (-1.0, 1.0), (1.0, -1.0)];
    for (l, (&(z, y), &(sz, sy))) in rep.raw.iter().zip(&signs).enumerate() {
        c.expect(z * sz > 1e-10 && y * sy > 1e-10, format!("block {} signs ({z:e}, {y:e})", l + 1));
    }
    c.expect(rep.raw.len() == 3, "expected three blocks");
    let p = chain_profile(&spec, &Chain::new(chain.to_vec()).unwrap()).unwrap();
    let (za, ya) = (p.z_argmax(), p.y_argmax());
    let pair = [za, ya];
    c.expect(pair.contains(&('A', 2)) && pair.contains(&('F', 2)), format!("maxima at {za:?}, {ya:?}"));
    c.note(format!(
        "Z3 = {}{} and Y3 = {}{}",
        za.0, za.1, ya.0, ya.1
    ));
}

fn example_three(c: &mut Check) {
    let spec = ex3();
    match classify(&spec, &ClassifyOptions::default()) {
        Ok(r) => {
            c.expect(r.label == PhaseLabel::frsb(&[1, 2]), format!("classified as {}", r.label));
            c.expect(r.label.f_set == vec![1], "F set");
        }
        Err(e) => c.expect(false, format!("classify: {e}")),
    }
    match solve_frsb(&spec, &[1, 2]) {
        Ok(s) => {
            let (q11, q12, q22) = (s.block_chains[0][1], s.block_chains[1][0], s.block_chains[1][1]);
            c.expect(in_range(q11, 0.929, 0.93), format!("q1^1 = {q11}"));
            c.expect(in_range(q12, 0.9352, 0.936) && in_range(q22, 0.9497, 0.94975), format!("({q12}, {q22})"));
            c.note(format!("q1^1 {q11:.6} q1^2 {q12:.6} q2^2 {q22:.6}"));
        }
        Err(e) => c.expect(false, format!("solve_frsb: {e}")),
    }
    c.expect(hb(&spec, HBar::H1L, 0.929, 0.929) <= 0.0 && hb(&spec, HBar::H1L, 0.93, 0.93) >= 0.0, "h1L bracket");
    let (a, b) = ([0.9352, 0.936], [0.9497, 0.94975]);
    for i in 0..2 {
        c.expect(hb(&spec, HBar::H2L, a[0], b[i]) <= 0.0, format!("h2L(a1, b{})", i + 1));
        c.expect(hb(&spec, HBar::H2L, a[1], b[i]) >= 0.0, format!("h2L(a2, b{})", i + 1));
        c.expect(hb(&spec, HBar::H3L, a[i], b[0]) <= 0.0, format!("h3L(a{}, b1)", i + 1));
        c.expect(hb(&spec, HBar::H3L, a[i], b[1]) >= 0.0, format!("h3L(a{}, b2)", i + 1));
    }
    for &x in &a {
        for &y in &b {
            let p = chain_profile(&spec, &Chain::new(vec![x, y, 1.0]).unwrap()).unwrap();
            c.expect(p.z_argmax() == ('F', 1) && p.y_argmax() == ('F', 0), "Z2 = F1, Y2 = F0");
            c.expect(hb(&spec, HBar::H2U, x, y) <= 0.0, "h2U <= 0 on the box");
            c.expect(hb(&spec, HBar::H3U, x, y) >= 0.0, "h3U >= 0 on the box");
        }
    }
}

fn example_four(c: &mut Check) {
    let spec = ex4();
    match classify(&spec, &ClassifyOptions::default()) {
        Ok(r) => {
            c.expect(r.label == PhaseLabel::frsb(&[2, 1]), format!("classified as {}", r.label));
            c.expect(r.label.f_set == vec![2], "F set");
        }
        Err(e) => c.expect(false, format!("classify: {e}")),
    }
    match solve_frsb(&spec, &[2, 1]) {
        Ok(s) => {
            let (q21, q22) = (s.block_chains[0][2], s.block_chains[1][0]);
            c.expect(in_range(q21, 0.97136, 0.97139), format!("q2^1 = {q21}"));
            c.expect(in_range(q22, 0.9714, 0.9715), format!("q2^2 = {q22}"));
            c.note(format!("q1^1 {:.7} q2^1 {q21:.7} q2^2 {q22:.7}", s.block_chains[0][1]));
        }
        Err(e) => c.expect(false, format!("solve_frsb: {e}")),
    }
    c.expect(hb(&spec, HBar::H3U, 0.9714, 0.9714) <= 0.0 && hb(&spec, HBar::H3U, 0.9715, 0.9715) >= 0.0, "h3U bracket");
    let (a, b) = ([0.934676, 0.9346764], [0.97136, 0.97139]);
    for i in 0..2 {
        c.expect(hb(&spec, HBar::H2U, a[i], b[0]) <= 0.0, format!("h2U(a{}, b1)", i + 1));
        c.expect(hb(&spec, HBar::H2U, a[i], b[1]) >= 0.0, format!("h2U(a{}, b2)", i + 1));
    }
    c.expect(hb(&spec, HBar::H1U, a[0], b[0]) >= 0.0, "h1U(a1, b1)");
    c.expect(hb(&spec, HBar::H1U, a[0], b[1]) <= 0.0, "h1U(a1, b2)");
    c.expect(hb(&spec, HBar::H1U, a[1], b[0]) >= 0.0, "h1U(a2, b1)");
    c.expect(hb(&spec, HBar::H1U, a[1], b[1]) >= 0.0, "h1U(a2, b2)");
    for &x in &a {
        for &y in &b {
            let p = chain_profile(&spec, &Chain::new(vec![0.0, x, y]).unwrap()).unwrap();
            c.expect(p.z_argmax() == ('F', 1) && p.y_argmax() == ('F', 2), "Z2 = F1, Y2 = F2");
            c.expect(hb(&spec, HBar::H1L, x, y) <= 0.0 && hb(&spec, HBar::H2L, x, y) >= 0.0, "h1L, h2L on the box");
        }
    }
}

fn example_five(c: &mut Check) {
    let spec = ex5();
    match classify(&spec, &ClassifyOptions::default()) {
        Ok(r) => {
            c.expect(r.label == PhaseLabel::frsb(&[1, 1, 1]), format!("classified as {}", r.label));
            c.expect(r.label.f_set == vec![1, 2], "F set");
        }
        Err(e) => c.expect(false, format!("classify: {e}")),
    }
    match solve_frsb(&spec, &[1, 1, 1]) {
        Ok(s) => {
            let q = &s.block_chains;
            let (q11, q12, q22, q23) = (q[0][1], q[1][0], q[1][1], q[2][0]);
            c.expect(in_range(q11, 0.9345, 0.935), format!("q1^1 = {q11}"));
            c.expect(in_range(q12, 0.939, 0.94) && in_range(q22, 0.959, 0.961), format!("({q12}, {q22})"));
            c.expect(in_range(q23, 0.97, 0.972), format!("q2^3 = {q23}"));
            c.note(format!("q1^1 {q11:.6} q1^2 {q12:.6} q2^2 {q22:.6} q2^3 {q23:.6}"));
        }
        Err(e) => c.expect(false, format!("solve_frsb: {e}")),
    }
    let (a, b) = ([0.939, 0.94], [0.959, 0.961]);
    for i in 0..2 {
        c.expect(hb(&spec, HBar::H2U, a[i], b[0]) <= 0.0 && hb(&spec, HBar::H2U, a[i], b[1]) >= 0.0, "h2U table");
        c.expect(hb(&spec, HBar::H2L, a[0], b[i]) <= 0.0 && hb(&spec, HBar::H2L, a[1], b[i]) >= 0.0, "h2L table");
    }
}

/// Every measure the solver paths produce for the corpus.
fn corpus_measures() -> Vec<(String, ParisiMeasure)> {
    let mut out = Vec::new();
    let mut push = |name: &str, m: Option<ParisiMeasure>| {
        if let Some(m) = m {
            out.push((name.to_string(), m));
        }
    };
    push("pure 3-spin 1-RSB", solve_rsb(&pure(3), 1).ok().and_then(|s| s.measure));
    push("Example 2 3-RSB", solve_rsb(&ex2(), 3).ok().and_then(|s| s.measure));
    push("Example 3", solve_frsb(&ex3(), &[1, 2]).ok().and_then(|s| s.measure));
    push("Example 4", solve_frsb(&ex4(), &[2, 1]).ok().and_then(|s| s.measure));
    push("Example 5", solve_frsb(&ex5(), &[1, 1, 1]).ok().and_then(|s| s.measure));
    for (name, spec) in [("pure 2-spin", two_spin()), ("pure 3-spin", pure(3)), ("Example 2", ex2())] {
        push(&format!("{name} via classify"), classify(&spec, &ClassifyOptions::fast()).ok().map(|r| r.measure));
    }
    out
}

fn closure(c: &mut Check) {
    let measures = corpus_measures();
    c.expect(measures.len() == 8, format!("only {} measures built", measures.len()));
    for (name, m) in &measures {
        let v = verify_parisi(m, 4096, &Tolerances::default());
        c.expect(v.passed, format!("{name}: {v:?}"));
        c.expect(
            v.cond_i_residual.abs() <= 1e-8 && v.min_g >= -1e-8 && v.g_at_support <= 1e-8,
            format!("{name}: tolerances"),
        );
    }
    c.note(format!("{} measures", measures.len()));
}

fn oracle_agreement(c: &mut Check) {
    let specs = [
        ("pure 3-spin", pure(3)),
        ("pure 2-spin", two_spin()),
        ("Example 2", ex2()),
        ("Example 3", ex3()),
        ("Example 4", ex4()),
        ("Example 5", ex5()),
    ];
    let mut worst = 0f64;
    for (name, spec) in &specs {
        let cl = classify(spec, &ClassifyOptions::fast());
        let or = minimize_cs(spec, &OracleOptions { cells: 2000, ..Default::default() });
        match (cl, or) {
            (Ok(cl), Ok(or)) => {
                let rel = (cl.energy - or.energy).abs() / cl.energy;
                worst = worst.max(rel);
                c.expect(rel <= 1e-4, format!("{name}: relative gap {rel:e}"));
                if *name == "pure 2-spin" {
                    c.expect((or.energy - 2f64.sqrt()).abs() <= 1e-5, format!("2-spin energy {}", or.energy));
                }
                if *name == "Example 3" {
                    let seg = cl.measure.segments()[0];
                    let mut dev = 0f64;
                    for (&x, &p) in or.grid.iter().zip(&or.phi) {
                        if x >= seg.a + 0.001 && x <= seg.b - 0.001 {
                            dev = dev.max((p - spec.phi_star(x)).abs());
                        }
                    }
                    c.expect(dev <= 5e-4, format!("segment deviation {dev:e}"));
                    c.note(format!("segment deviation {dev:.1e}"));
                }
            }
            (Err(e), _) | (_, Err(e)) => c.expect(false, format!("{name}: {e}")),
        }
    }
    c.note(format!("worst relative gap {worst:.1e}"));
}

fn kernel_suite(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs = [pure(3), pure(90), ex2(), ex3(), ex5(), three(0.5, 0.3)];
    let mut samples = 0;
    for spec in &specs {
        let scale = spec.xi1(1.0);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(0.0..0.95);
            let y: f64 = (x + rng.gen_range(0.01..0.5)).min(1.0);
            let z: f64 = 10f64.powf(rng.gen_range(-6.0..6.0));
            samples += 1;
            c.expect(h(spec, x, x, z) == Ok(0.0), "h(x, x, z) = 0");
            let a = h(spec, x, y, z).unwrap();
            let b = h(spec, x, y, z * 1.01).unwrap();
            c.expect(b > a, format!("h not increasing at ({x}, {y}, {z})"));
            let lo = spec.xi(y) - spec.xi(x) - spec.xi1(y) * (y - x);
            let hi = spec.xi(y) - spec.xi(x) - spec.xi1(x) * (y - x);
            c.expect((h(spec, x, y, 1e-8).unwrap() - lo).abs() < 1e-6 * scale, "z -> 0 limit");
            c.expect((h(spec, x, y, 1e8).unwrap() - hi).abs() < 1e-6 * scale, "z -> inf limit");
            let mid = spec.xi(y) - spec.xi(x) - 0.5 * (spec.xi1(x) + spec.xi1(y)) * (y - x);
            c.expect((h_arg(spec, x, y, ZArg::One).unwrap() - mid).abs() < 1e-12 * scale, "z = 1 value");
        }
    }
    // series against the direct form on 1e-4 <= |z - 1| <= 1e-3
    for i in 0..=100 {
        let a = 1e-4 + 9e-6 * i as f64;
        for z in [1.0 + a, 1.0 - a] {
            let u: f64 = z - 1.0;
            let direct = 1.0 / u - z * u.ln_1p() / (u * u);
            c.expect((bracket(z) - direct).abs() < 1e-10, format!("series at z = {z}"));
        }
    }
    // r1 -> r2 on a grid, for the corpus mixtures
    let mut worst = 0f64;
    for spec in [pure(3), ex2(), ex3(), ex4(), ex5()] {
        for i in 0..40 {
            for j in (i + 1)..40 {
                let (x, y) = (i as f64 / 40.0, j as f64 / 40.0);
                worst = worst.max((r1(&spec, x, y, y + 1e-9).unwrap() - r2(&spec, x, y)).abs());
            }
        }
    }
    c.expect(worst < 1e-5, format!("r1 - r2 up to {worst:e}"));
    // both expanded forms of each block equation at the RSB solutions
    for (spec, k) in [(pure(3), 1), (ex2(), 3)] {
        match solve_rsb(&spec, k) {
            Ok(s) => {
                let forms = rsb_dual_forms(&spec, &s.q, 1.0 + s.zk).unwrap_or_default();
                c.expect(forms.len() == k, "dual forms missing");
                for (a, b) in forms {
                    c.expect(a.abs() < 1e-9 && b.is_none_or(|b| (a - b).abs() < 1e-9), "parity duality");
                }
            }
            Err(e) => c.expect(false, format!("solve_rsb: {e}")),
        }
    }
    c.note(format!("{samples} random (x, y, z) samples"));
}

/// `n` distinct sorted exponents in 3..=90 and weights uniform on the simplex.
fn random_mixture(rng: &mut ChaCha8Rng) -> Mixture {
    let n = rng.gen_range(1..=3);
    let mut e: Vec<u32> = Vec::new();
    while e.len() < n {
        let p = rng.gen_range(3..=90);
        if !e.contains(&p) {
            e.push(p);
        }
    }
    e.sort_unstable();
    let g: Vec<f64> = (0..n).map(|_| -rng.gen_range(f64::EPSILON..1.0).ln()).collect();
    let t: f64 = g.iter().sum();
    let w: Vec<f64> = g.iter().map(|v| v / t).collect();
    Mixture::new(&e, &w[..n - 1], true).unwrap()
}

fn random_corpus(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = std::collections::BTreeMap::new();
    for i in 0..50 {
        let spec = random_mixture(&mut rng);
        let n = spec.n();
        let what = format!("#{i} {:?} {:?}", spec.exponents(), spec.weights());
        match classify(&spec, &ClassifyOptions::default()) {
            Ok(r) => {
                c.expect(r.label.k <= n, format!("{what}: k = {} > n", r.label.k));
                let iso = r.measure.isolated_support().len();
                c.expect(iso <= n + 1, format!("{what}: {iso} isolated points"));
                if r.criterion_agrees == Some(false) {
                    c.note(format!("{what}: criterion route disagrees"));
                }
                *counts.entry(format!("{}-{}", r.label.kind, r.label.k)).or_insert(0) += 1;
            }
            Err(e @ Error::AmbiguousPhase { .. }) => c.expect(false, format!("{what}: {e}")),
            Err(e) => c.expect(false, format!("{what}: {e}")),
        }
    }
    c.note(format!("{counts:?}"));
}

fn boundaries(c: &mut Check) {
    match two_component_boundaries(3, 16) {
        Ok(t) => {
            let l = [
                t.rsb1_to_rsb2.map(|v| v.1),
                t.rsb2_to_frsb2.map(|v| v.1),
                t.frsb2_to_frsb1,
                t.frsb1_to_rsb1,
            ];
            if l.iter().any(Option::is_none) {
                c.expect(false, format!("missing boundary: {t:?}"));
                return;
            }
            let l: Vec<f64> = l.iter().map(|v| v.unwrap()).collect();
            c.expect(l.windows(2).all(|w| w[0] < w[1]), format!("order {l:?}"));
            let at = |lambda: f64| {
                Mixture::new(&[3, 16], &[lambda, 1.0 - lambda], false)
                    .and_then(|s| classify(&s, &ClassifyOptions::default()))
                    .map(|r| r.label)
            };
            let want = [
                (0.5 * (l[0] + l[1]), PhaseLabel::rsb(2)),
                (0.5 * (l[1] + l[2]), PhaseLabel::frsb(&[1, 1])),
                (0.5 * (l[2] + l[3]), PhaseLabel::frsb(&[1, 0])),
            ];
            for (lambda, label) in want {
                match at(lambda) {
                    Ok(got) => {
                        let ok = got == label && (got.kind != PhaseKind::Frsb || got.k == label.k);
                        c.expect(ok, format!("lambda {lambda}: {got}, expected {label}"));
                    }
                    Err(e) => c.expect(false, format!("lambda {lambda}: {e}")),
                }
            }
            c.note(format!("lambdas {:.5} < {:.5} < {:.5} < {:.5}", l[0], l[1], l[2], l[3]));
        }
        Err(e) => c.expect(false, format!("two_component_boundaries: {e}")),
    }
}

fn main() -> ExitCode {
    type Run = fn(&mut Check);
    let criteria: [(&str, Run, Option<Duration>); 9] = [
        ("1 Example 2 (3-RSB)", example_two, Some(Duration::from_secs(5))),
        ("2 Example 3 (3-FRSB, F = {1})", example_three, Some(Duration::from_secs(10))),
        ("3 Example 4 (3-FRSB, F = {2})", example_four, None),
        ("4 Example 5 (3-FRSB, F = {1, 2})", example_five, None),
        ("5 verification closure", closure, None),
        ("6 oracle agreement", oracle_agreement, None),
        ("7 kernel properties", kernel_suite, None),
        ("8 random corpus", random_corpus, Some(Duration::from_secs(600))),
        ("9 two-component boundaries", boundaries, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let mut c = Check::new();
        let start = Instant::now();
        run(&mut c);
        let took = start.elapsed();
        if let Some(limit) = limit {
            c.expect(took < limit, format!("took {took:.2?}, limit {limit:?}"));
        }
        let verdict = if c.failures.is_empty() { "PASS" } else { "FAIL" };
        if !c.failures.is_empty() {
            failed += 1;
        }
        let mut line = format!("{verdict} {name} [{took:.2?}]");
        if !c.notes.is_empty() {
            line += &format!(": {}", c.notes.join("; "));
        }
        println!("{line}");
        for f in c.failures.iter().take(10) {
            println!("    {f}");
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
