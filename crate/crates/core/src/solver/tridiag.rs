//! Thomas algorithm for tridiagonal systems.

/// Solves `A x = rhs` for a tridiagonal `A` with sub-diagonal `sub`,
/// main diagonal `diag` and super-diagonal `sup`, writing the solution into
/// `rhs`. `scratch` must have the same length as `rhs`.
///
/// No pivoting: callers assemble strictly diagonally dominant M-matrix rows,
/// for which elimination is unconditionally stable.
pub fn solve_in_place(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    debug_assert!(n >= 1);
    debug_assert_eq!(sub.len(), n - 1);
    debug_assert_eq!(diag.len(), n);
    debug_assert_eq!(sup.len(), n - 1);
    debug_assert_eq!(scratch.len(), n);

    // Forward sweep: scratch holds the modified super-diagonal.
    let mut denom = diag[0];
    scratch[0] = 0.0;
    rhs[0] /= denom;
    for i in 1..n {
        scratch[i] = sup[i - 1] / denom;
        denom = diag[i] - sub[i - 1] * scratch[i];
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / denom;
    }
    // Back substitution.
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= scratch[i + 1] * next;
    }
}
