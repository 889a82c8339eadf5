//! Prints the relaxed AND/OR activations of a two-literal rule over all inputs
//! next to the boolean truth table, for binary and for fractional weights.

use lia::logic::{boolean_eval, conj_plus, disj_plus, literalize, BinarizedRule, Operator};

fn main() {
    // AND/OR(x0, NOT x1)
    for weights in [[1.0, -1.0], [0.8, -0.6]] {
        println!("weights {weights:?}");
        println!("  x0 x1   conj    disj   AND  OR");
        for bits in 0..4u8 {
            let x = [bits & 1 == 1, bits & 2 == 2];
            let lit = literalize(&x, &weights);
            let and = BinarizedRule::from_weights(&weights, 1.0, 0.5);
            let or = BinarizedRule::from_weights(&weights, -1.0, 0.5);
            assert_eq!(and.operator, Operator::And);
            println!(
                "  {:>2} {:>2}  {:.4}  {:.4}  {:>4} {:>3}",
                x[0] as u8,
                x[1] as u8,
                conj_plus(&lit.a, &lit.m),
                disj_plus(&lit.a, &lit.m),
                boolean_eval(&x, &and) as u8,
                boolean_eval(&x, &or) as u8
            );
        }
    }
}
