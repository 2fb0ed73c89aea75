use drsn::coeff::C64;
use drsn::fields::{painleve_one, painleve_one_constant};
use drsn::stokes::{extract_stokes_data, StokesConfig};

fn main() {
    let kapaev = painleve_one_constant();
    println!("target magnitude: {kapaev:.6}");
    for order in [14usize, 18, 22] {
        for xr in [0.25f64, 0.35, 0.45] {
            for off in [0.78f64, 1.0] {
                let y = painleve_one(order + 1);
                let cfg = StokesConfig { n_max: 2, w_order: 2, w_points: 8, x_radius: xr, ..Default::default() };
                match extract_stokes_data(&y, order, off, &cfg) {
                    Ok(out) => {
                        let c_plus = out.plus.at_zero(2, 0);
                        let c_minus = out.minus.at_zero(1, 0);
                        println!(
                            "order {order} xr {xr} off {off}: |Psi_2,+,0(0)| = {:.6} |Psi_1,-,0(0)| = {:.6}  ratios {:.4} {:.4}",
                            c_plus.norm(), c_minus.norm(),
                            c_plus.norm() / kapaev, c_minus.norm() / kapaev
                        );
                    }
                    Err(e) => println!("order {order} xr {xr} off {off}: ERR {e}"),
                }
            }
        }
    }
    let _ = C64::new(0.0, 0.0);
}
