//! A worked example: Francisco asks Rajiv about improv classes after a
//! conversation about guitar, artwork and poetry.

use crate::dialogue::{DialogueContext, Turn};

pub const SPEAKER: &str = "Rajiv";
pub const OTHER: &str = "Francisco";

pub const TURNS: [(&str, &str); 7] = [
    ("Francisco", "Hey Rajiv! How's the guitar practice going?"),
    ("Rajiv", "It's going alright. I'm still learning the basics."),
    (
        "Francisco",
        "That's cool. Have you thought about incorporating your guitar playing into your artwork?",
    ),
    (
        "Rajiv",
        "Actually, I have. I was thinking about using sound waves as a way to create mathematical patterns.",
    ),
    (
        "Francisco",
        "That sounds really interesting. We should definitely collaborate on a project involving artwork and music.",
    ),
    (
        "Rajiv",
        "Definitely. We could also explore incorporating poetry into the mix.",
    ),
    (
        "Francisco",
        "I like the way you think. Speaking of collaborations, have you signed up for those improv classes yet?",
    ),
];

/// Rajiv's persona-free first draft.
pub const GENERAL_RESPONSE: &str = "Not yet, but I'm definitely considering it. Improv could really help with thinking on my feet during creative projects.";

/// Rajiv's answer once his plans with Hailey are taken into account.
pub const REFINED_RESPONSE: &str = "Not yet, but I'm planning to sign up with Hailey Johnson soon. Improv could really help with thinking on my feet during creative projects.";

/// Rajiv's memory: the first entry matches the conversation so far, the
/// second matches the improv question.
pub const RAJIV_MEMORY: [&str; 3] = [
    "Rajiv combines guitar playing with artwork.",
    "Rajiv plans to take improv with Hailey Johnson.",
    "Rajiv enjoys cooking spicy food.",
];

pub fn turns() -> Vec<Turn> {
    TURNS.iter().map(|(s, t)| Turn::new(*s, *t)).collect()
}

/// Rajiv replying to Francisco's improv question.
pub fn context() -> DialogueContext {
    DialogueContext::new(SPEAKER, OTHER, turns()).expect("sample dialogue is valid")
}
