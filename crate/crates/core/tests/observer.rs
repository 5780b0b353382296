use std::sync::Arc;
use std::time::Instant;

use triform::analysis::SampleBox;
use triform::form::{assemble_triangular_form, FormOptions};
use triform::observer::{run_high_gain_observer, ObserverConfig};
use triform::signal::InputSignal;
use triform::{parse_system, ControlAffineSystem};

fn example_one() -> Arc<ControlAffineSystem> {
    Arc::new(parse_system("states x1 x2 x3\ninputs u\nf = [x2, x3^3, 1]\ng = [[0],[0],[1]]\nh = x1\n").unwrap())
}

#[test]
fn example_one_observer_converges_from_offset() {
    let region = SampleBox::uniform(vec![-1.0, -1.0, 0.6], vec![14.0, 6.0, 1.8], 9).with_random(200, 1);
    let start = Instant::now();
    let form = assemble_triangular_form(example_one(), 2, 3, &region, &FormOptions::default(), None).unwrap();
    eprintln!("form built in {:?}; fit {:?}", start.elapsed(), form.fit);
    let x0 = [0.0, 0.0, 1.0];
    let z0: Vec<f64> = form.lift(&x0).unwrap().iter().map(|v| v + 0.2).collect();
    let start = Instant::now();
    let run = run_high_gain_observer(&form, &ObserverConfig::default(), &x0, Some(&z0), &InputSignal::constant(-1.0), 5.0, 1e-3)
        .unwrap();
    eprintln!(
        "observer in {:?}: init {:.3} peak {:.3} final {:.3e} fallbacks {} sat {}",
        start.elapsed(),
        run.initial_z_error,
        run.peak_z_error,
        run.final_z_error,
        run.fallbacks,
        run.saturated_steps
    );
    assert!(run.final_z_error < 1e-3);
    assert!(!run.degraded);
}

#[test]
fn exact_start_stays_on_trajectory() {
    let region = SampleBox::uniform(vec![-1.0, -1.0, 0.6], vec![14.0, 6.0, 1.8], 9).with_random(200, 1);
    let form = assemble_triangular_form(example_one(), 2, 3, &region, &FormOptions::default(), None).unwrap();
    let run = run_high_gain_observer(&form, &ObserverConfig::default(), &[0.0, 0.0, 1.0], None, &InputSignal::constant(-1.0), 1.0, 1e-3)
        .unwrap();
    eprintln!("peak {:.3e}", run.peak_z_error);
    assert!(run.peak_z_error < 1e-5);
}
