//! The barrier solver on its own: a small log-utility allocation with a
//! norm budget and a coupling cap.
//!
//! maximize ln(1 + 3 x0) + ln(1 + x1) + ln(1 + 2 x2)
//! s.t.     ||x||_2 <= 2,  x0 + x1 <= 1.5,  x >= 0

use star_ris::convex::{solve, Constraint, ConvexProgram, LinearForm, ObjectiveTerm};

fn main() -> star_ris::Result<()> {
    let mut p = ConvexProgram::new(3);
    for (i, gain) in [3.0, 1.0, 2.0].into_iter().enumerate() {
        p.maximize(ObjectiveTerm::Log { weight: 1.0, arg: LinearForm::new(vec![(i, gain)], 0.0) });
        p.subject_to(Constraint::Bounds { var: i, lower: 0.0, upper: f64::INFINITY });
    }
    p.subject_to(Constraint::Cone {
        terms: (0..3).map(LinearForm::var).collect(),
        bound: LinearForm::constant(2.0),
    })
    .subject_to(Constraint::Affine(LinearForm::new(vec![(0, 1.0), (1, 1.0)], -1.5)));

    print!("{}", p.to_listing());
    let out = solve(&p, 1e-9)?;
    println!("status {:?}", out.status);
    println!("x* = {:.6?}", out.x_star);
    println!("objective {:.8}", out.objective_value);
    println!(
        "KKT residual {:.1e}, {} Newton steps ({} in phase one)",
        out.kkt_residual, out.iterations, out.phase_one_iterations
    );
    println!("max violation {:.1e}", p.max_violation(&out.x_star));
    Ok(())
}
