//! Central finite differences against the analytic backward pass, in f64.

use prores::model::{AlphaMode, VariantKind};

mod common;
use common::{worst_error, TOL};

#[test]
fn every_variant_matches_finite_differences_mid_warmup() {
    for kind in VariantKind::ALL {
        let e = worst_error(kind, AlphaMode::Step(5));
        assert!(e <= TOL, "{kind}: worst relative error {e:e}");
    }
}

#[test]
fn every_variant_matches_finite_differences_after_warmup() {
    for kind in VariantKind::ALL {
        let e = worst_error(kind, AlphaMode::Step(1000));
        assert!(e <= TOL, "{kind}: worst relative error {e:e}");
    }
}
