mod common;

use common::cart::{self, datasets};
use lmtune::forest::{fit, Hyperparams};
use lmtune::{Execution, NUM_FEATURES};

#[test]
fn single_tree_equals_exhaustive_cart() {
    let hp = Hyperparams { num_trees: 1, features_per_node: NUM_FEATURES, bootstrap: false, ..Default::default() };
    for (k, (x, y)) in datasets().iter().enumerate() {
        assert!(x.len() <= 200);
        let model = fit(x, y, &hp, Execution::Sequential).unwrap();
        let reference = cart::fit(x, y);
        for (i, row) in x.iter().enumerate() {
            let got = model.trees[0].leaf_value(row);
            let want = reference.predict(row);
            assert_eq!(got.to_bits(), want.to_bits(), "dataset {k} row {i}: {got} vs {want}");
        }
    }
}
