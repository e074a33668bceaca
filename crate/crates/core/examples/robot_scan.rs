//! Sweeps robot-check follower impedances and reports the 50-step
//! velocity-MSE factor against a given validation reference.

use tandem_core::eval::robot_in_loop_eval;
use tandem_core::mlp::load;
use tandem_core::pipeline::RobotCheckConfig;
use tandem_core::synth::FollowerImpedance;

fn main() {
    let model_path = std::env::args().nth(1).expect("model path");
    let reference: f64 = std::env::args()
        .nth(2)
        .expect("validation mse reference")
        .parse()
        .expect("reference parses");
    let model = load(model_path.as_ref()).expect("load model");
    let plans = RobotCheckConfig::default().build_plans().expect("plans");

    let candidates = [
        (12.5, 62.0),
        (13.0, 65.0),
        (13.0, 70.0),
        (14.0, 75.0),
        (14.0, 85.0),
        (12.5, 70.0),
        (13.5, 62.0),
        (7.5, 38.0),
        (7.0, 35.0),
    ];
    for (mass, damping) in candidates {
        let follower = FollowerImpedance {
            mass_kg: mass,
            damping,
            stiffness: 0.0,
        };
        let report = robot_in_loop_eval(&model, &follower, &plans, 50, 200.0).expect("robot eval");
        let mse = report.mean_velocity_mse_through(50);
        println!(
            "mass {mass:5.1} damping {damping:5.1}: mse {mse:.6} factor {:.2} (windows {}, diverged {})",
            mse / reference,
            report.n_windows,
            report.n_diverged
        );
    }
}
