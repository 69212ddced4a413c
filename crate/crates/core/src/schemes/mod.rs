//! Randomization schemes, assignment patterns and transformation groups.

mod design;
mod group;
mod pattern;

pub use design::{
    covariate_pattern_count, scheme_by_name, CovariateWeighting, RandomizationScheme, SchemeFile,
    MAX_ENUMERABLE_UNITS,
};
pub use group::{
    balanced_permutations, check_group, GroupCheckReport, Transformation, TransformationGroup,
    TransformationKind, Witness, MAX_ENUMERABLE_PERMUTATION_UNITS, MAX_ENUMERABLE_SIGN_UNITS,
};
pub use pattern::AssignmentPattern;
