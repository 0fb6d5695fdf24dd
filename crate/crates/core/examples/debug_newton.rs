use twisted_core::envelope::build_envelope;
use twisted_core::operators::preset::twisted_ma;
use twisted_core::operators::DomainSet;
use twisted_core::sym::SymMatrix;

fn main() {
    let op = twisted_ma::<f64>(1, 1, 0.1, 0.5, 4.0).unwrap();
    let DomainSet::Band(set) = op.domain else { panic!() };
    let env = build_envelope(&op.convex_part, &set, 12, 120, 21).unwrap();
    for (i, m) in env.minorants.iter().enumerate() {
        println!(
            "minorant {i}: n = [{:+.4} {:+.4}; {:+.4}], c = {:+.6}, slope_l = {:+.4}",
            m.n.get(0, 0), m.n.get(0, 1), m.n.get(1, 1), m.c,
            -m.n.get(1, 1)
        );
    }
    for y in [0.5, 0.8, 1.0, 1.3, 1.7, 2.0] {
        let m = SymMatrix::from_diag(&[1.0, -y]);
        let full = env.eval(&m).unwrap();
        println!("y = {y}: env = {full:+.6}, fcup = {:+.6}", op.convex_part.eval(&m).unwrap());
    }
}
