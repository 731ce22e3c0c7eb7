use demand_gbt::{grad_hess, LossKind};

fn grid() -> Vec<(f64, f64)> {
    let ys = [0.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 34.0, 50.0];
    let fs = [-3.0, -1.5, -0.5, 0.0, 0.3, 1.0, 1.7, 2.5, 3.2, 4.0];
    ys.iter()
        .flat_map(|&y| fs.iter().map(move |&f| (y, f)))
        .collect()
}

fn check(loss: LossKind) {
    for (y, f) in grid() {
        let (g, h) = grad_hess(loss, y, f).unwrap();
        let d1 = 1e-5;
        let fd_g = (loss.loss(y, f + d1) - loss.loss(y, f - d1)) / (2.0 * d1);
        let d2 = 1e-3;
        let fd_h =
            (loss.loss(y, f + d2) - 2.0 * loss.loss(y, f) + loss.loss(y, f - d2)) / (d2 * d2);
        assert!(
            (g - fd_g).abs() <= 1e-6 * g.abs().max(1.0),
            "{loss:?} y={y} F={f}: g={g} fd={fd_g}"
        );
        assert!(
            (h - fd_h).abs() <= 1e-6 * h.abs().max(1.0),
            "{loss:?} y={y} F={f}: h={h} fd={fd_h}"
        );
    }
}

#[test]
fn poisson_matches_finite_differences() {
    check(LossKind::PoissonLogLink);
}

#[test]
fn squared_matches_finite_differences() {
    check(LossKind::Squared);
}
