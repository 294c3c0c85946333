//! Fixtures shared by the benchmarks.

use rfield_core::{make_domain, Domain, DomainShape, FieldModel, LinearKernel, LipschitzMap, NoiseSpec, VolterraKernel};

/// `a_0 = a_{e_1} = 1` with standard normal innovations.
pub fn two_tap(d: usize) -> FieldModel {
    FieldModel::linear(LinearKernel::moving_average(d, &[1.0, 1.0]).unwrap(), NoiseSpec::normal())
}

/// One representative of each model family in dimension `d`.
pub fn families(d: usize) -> Vec<(&'static str, FieldModel)> {
    vec![
        ("linear", two_tap(d)),
        ("volterra", FieldModel::volterra(VolterraKernel::lag_one(d).unwrap(), NoiseSpec::normal())),
        (
            "subordinated",
            FieldModel::subordinated(
                LinearKernel::moving_average(d, &[1.0, 1.0]).unwrap(),
                LipschitzMap::Tanh,
                NoiseSpec::normal(),
            ),
        ),
    ]
}

pub fn square(n: usize) -> Domain {
    make_domain(&DomainShape::Box { n, d: 2 }).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(square(4).len(), 16);
        assert_eq!(families(2).len(), 3);
        assert_eq!(two_tap(1).longrun_variance_exact().unwrap(), 4.0);
    }
}
