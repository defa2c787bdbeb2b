//! Reference profiles used throughout tests, benches and the CLI examples.

use crate::profile::{parse_profile, OrdinalProfile};

/// 23 voters over A, B, C on which Borda, instant runoff and ranked pairs
/// all disagree.
pub const DINERS_BALLOTS: &str = "\
alternatives: A, B, C
4: A > B > C
4: A > C > B
9: B > C > A
4: C > A > B
2: C > B > A
";

/// Three voters whose pairwise majorities form the cycle A > B > C > A.
pub const CONDORCET_CYCLE_BALLOTS: &str = "\
alternatives: A, B, C
1: A > B > C
1: C > A > B
1: B > C > A
";

/// Dinner vote: 52 prefer the Chinese restaurant, 48 the Indian one. Split
/// into 26/26/24/24 ballots so each half can receive its own clone order.
pub const RESTAURANT_BALLOTS: &str = "\
alternatives: C, I
26: C > I
26: C > I
24: I > C
24: I > C
";

/// The restaurant vote after splitting C into two floors.
pub const RESTAURANT_CLONED_BALLOTS: &str = "\
alternatives: C1, C2, I
26: C1 > C2 > I
26: C2 > C1 > I
24: I > C1 > C2
24: I > C2 > C1
";

pub fn diners() -> OrdinalProfile {
    parse_profile(DINERS_BALLOTS).expect("fixture parses")
}

pub fn condorcet_cycle() -> OrdinalProfile {
    parse_profile(CONDORCET_CYCLE_BALLOTS).expect("fixture parses")
}

pub fn restaurant() -> OrdinalProfile {
    parse_profile(RESTAURANT_BALLOTS).expect("fixture parses")
}

pub fn restaurant_with_clones() -> OrdinalProfile {
    parse_profile(RESTAURANT_CLONED_BALLOTS).expect("fixture parses")
}
