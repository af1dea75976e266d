mod common;

use logitlab::surrogate::{
    admissibility_threshold, admissible, exact_ce, f_pm, gap_shrinkage_terms, mean_field_loss_surface,
    misclassified_coeffs, shrinkage_terms_from_gaps, surrogate_logit, truncated_ce, truncated_ce_gradient,
    truncated_ce_parts, Branch, Case, GapShiftInput, MeanFieldParams, SurrogateSpec,
};
use rand::Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

// Reference values from tests/oracles/closed_forms.py (mpmath, 50 digits).
#[test]
fn closed_forms_match_high_precision_values() {
    assert!(close(f_pm(5.0, 10, Branch::Plus).unwrap(), 0.000042803405546755120497, 1e-9));
    assert!(close(f_pm(5.0, 10, Branch::Minus).unwrap(), -2.2582680687372944517, 1e-14));
    let p = misclassified_coeffs(5.0, 10, Branch::Plus).unwrap();
    assert!(close(p.g, -2.8654563222296483208, 1e-14));
    assert!(close(p.kappa, 1.8249303013074915994, 1e-14));
    assert!(close(p.psi, -2.2673946872168632919, 1e-14));
    let m = misclassified_coeffs(5.0, 10, Branch::Minus).unwrap();
    assert!(close(m.g, 0.83676462608167635447, 1e-14));
    assert!(close(m.kappa, p.kappa, 0.0));
    assert!(close(m.psi, -2.2142831879560607147, 1e-14));
}

#[test]
fn thresholds_match_high_precision_roots() {
    for (n, want) in [(10, 3.5049353102166532417), (4, 3.1411305942255621364), (100, 5.374003765300689939)] {
        let got = admissibility_threshold(n, Case::Misclassified, Branch::Plus).unwrap();
        assert!((got - want).abs() < 1e-9, "N = {n}: {got} vs {want}");
    }
}

#[test]
fn admissibility_flips_at_the_threshold() {
    let t = admissibility_threshold(10, Case::Misclassified, Branch::Plus).unwrap();
    let spec = |beta| SurrogateSpec { n_classes: 10, beta, case: Case::Misclassified, branch: Branch::Plus };
    assert!(!admissible(&spec(t - 1e-6)).unwrap());
    assert!(admissible(&spec(t + 1e-6)).unwrap());
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = common::rng(21);
    for _ in 0..20 {
        let n = r.random_range(3..12);
        let a = r.random_range(0..n);
        let y = r.random_range(0..n);
        let beta = r.random_range(1.0..8.0);
        let mut v: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        v[a] = 0.0;
        let g = truncated_ce_gradient(beta, a, &v, y).unwrap();
        assert_eq!(g[a], 0.0);
        let h = 1e-6;
        for j in (0..n).filter(|&j| j != a) {
            let mut p = v.clone();
            let mut m = v.clone();
            p[j] += h;
            m[j] -= h;
            let fd = (truncated_ce_parts(beta, a, &p, y).unwrap() - truncated_ce_parts(beta, a, &m, y).unwrap())
                / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7 * (1.0 + g[j].abs()), "{fd} vs {}", g[j]);
        }
    }
}

#[test]
fn truncation_error_is_fourth_order() {
    // Around beta e_a the expansion should agree with the exact loss to O(|v|^4).
    let mut r = common::rng(22);
    let n = 6;
    let dir: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { r.random_range(-1.0..1.0) }).collect();
    let err = |s: f64| {
        let mut z: Vec<f64> = dir.iter().map(|d| s * d).collect();
        z[0] = 6.0;
        (truncated_ce(&z, 2).unwrap() - exact_ce(&z, 2).unwrap()).abs()
    };
    let ratio = err(0.2) / err(0.1);
    assert!((10.0..22.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn loss_surface_is_the_mixture_of_direct_losses() {
    let grid = [3.0, 4.0, 6.0, 9.0];
    let s = mean_field_loss_surface(&grid, &grid, 10, 0.2, Branch::Plus).unwrap();
    for (i, &bc) in grid.iter().enumerate() {
        for (j, &bw) in grid.iter().enumerate() {
            let c = surrogate_logit(&SurrogateSpec { n_classes: 10, beta: bc, case: Case::Correct, branch: Branch::Plus }, 0, 0);
            let w = surrogate_logit(&SurrogateSpec { n_classes: 10, beta: bw, case: Case::Misclassified, branch: Branch::Plus }, 1, 0);
            let want = match (c, w) {
                (Ok(c), Ok(w)) => Some(0.8 * exact_ce(&c, 0).unwrap() + 0.2 * exact_ce(&w, 1).unwrap()),
                _ => None,
            };
            assert_eq!(s.values[i][j], want);
        }
    }
    assert!(s.values[0][0].is_none(), "3.0 is below the misclassified threshold");
}

#[test]
fn shrinkage_is_nonpositive_and_quadratic_in_the_correct_gap() {
    let mut cells = 0;
    for i in 0..=40 {
        for j in 0..=40 {
            let (bc, bw) = (2.5 + 0.25 * i as f64, 2.5 + 0.25 * j as f64);
            let ok = |beta, case| admissible(&SurrogateSpec { n_classes: 10, beta, case, branch: Branch::Plus }).unwrap_or(false);
            if !(ok(bc, Case::Correct) && ok(bw, Case::Misclassified)) {
                continue;
            }
            for (oc, ow) in [(0.0, 0.0), (1.0, 1.0), (0.3, 2.0), (2.0, 0.1)] {
                let t = gap_shrinkage_terms(&GapShiftInput {
                    params: MeanFieldParams { beta_correct: bc, beta_wrong: bw, n_classes: 10, error_rate: 0.2 },
                    epsilon: 0.1,
                    omega_correct: oc,
                    omega_wrong: ow,
                    branch: Branch::Plus,
                })
                .unwrap();
                assert!(t.total() <= 0.0, "({bc}, {bw}) omegas ({oc}, {ow}): {}", t.total());
            }
            cells += 1;
        }
    }
    assert!(cells > 1000);
    let one = shrinkage_terms_from_gaps(1.7, 2.0, 0.5, 10, 0.2, 0.1, 1.3, 0.7);
    let two = shrinkage_terms_from_gaps(3.4, 2.0, 0.5, 10, 0.2, 0.1, 1.3, 0.7);
    assert!(((two.correct / one.correct) - 4.0).abs() < 1e-10 * 4.0);
    assert_eq!(one.wrong, two.wrong);
    assert_eq!(one.cross, two.cross);
}
