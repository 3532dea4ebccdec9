#![no_main]
use libfuzzer_sys::fuzz_target;
use lhua::ontology::{enumerate_subgoals, sample_goal, Domain};
use lhua::seed::{stream, Stream};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(domain) = Domain::from_json(text) else { return };
    // A domain that loads must be usable.
    let mut rng = stream(0, Stream::Goals);
    if let Ok(goal) = sample_goal(&domain.templates, &mut rng) {
        goal.validate(&domain.ontology).unwrap();
        if goal.size() <= 8 {
            assert_eq!(enumerate_subgoals(&goal).len(), (1usize << goal.size()) - 1);
        }
    }
});
