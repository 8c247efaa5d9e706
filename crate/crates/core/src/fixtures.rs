//! Bundled example graph specs.

pub const BOWLING: &str = include_str!("../fixtures/bowling.spec");
pub const STOVE: &str = include_str!("../fixtures/stove.spec");
pub const SPORT_BASIC: &str = include_str!("../fixtures/sport_basic.spec");
pub const SPORT: &str = include_str!("../fixtures/sport.spec");
pub const SPORT_AGE: &str = include_str!("../fixtures/sport_age.spec");
pub const EDUCATION: &str = include_str!("../fixtures/education.spec");
pub const CYCLIC: &str = include_str!("../fixtures/cyclic.spec");

/// Every fixture that parses to a valid graph, by file stem.
pub const VALID: [(&str, &str); 6] = [
    ("bowling", BOWLING),
    ("stove", STOVE),
    ("sport_basic", SPORT_BASIC),
    ("sport", SPORT),
    ("sport_age", SPORT_AGE),
    ("education", EDUCATION),
];
