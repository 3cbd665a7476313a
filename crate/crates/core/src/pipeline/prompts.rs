//! Prompt templates and their renderers.
//!
//! Templates are versioned text assets with `{name}` placeholders. Rendering
//! is a single left-to-right pass, so substituted values are never scanned
//! again for placeholders. A `{` not followed by a known placeholder name and
//! `}` is copied literally (the JSON format lines rely on this).

use crate::dialogue::{DialogueContext, SessionTranscript};

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub version: u32,
    text: &'static str,
}

macro_rules! template {
    ($name:literal, $file:literal) => {
        Template {
            name: $name,
            version: 1,
            text: include_str!(concat!("../../assets/prompts/", $file)),
        }
    };
}

pub const GENERATION: Template = template!("generation", "generation.v1.txt");
pub const REFINEMENT: Template = template!("refinement", "refinement.v1.txt");
pub const DIRECT_GEN: Template = template!("direct_gen", "direct_gen.v1.txt");
pub const DIALOG_RETR: Template = template!("dialog_retr", "dialog_retr.v1.txt");
pub const EXTRACTION: Template = template!("extraction", "extraction.v1.txt");
pub const SUMMARY: Template = template!("summary", "summary.v1.txt");

/// Memory block used when nothing was retrieved.
pub const EMPTY_MEMORY_LINE: &str = "(no additional information)";

impl Template {
    /// Template body without the asset file's final newline.
    pub fn text(&self) -> &'static str {
        self.text.strip_suffix('\n').unwrap_or(self.text)
    }

    /// Substitutes `{key}` for each `(key, value)` pair.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let src = self.text();
        let mut out = String::with_capacity(src.len() + 256);
        let mut rest = src;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = after.find('}').and_then(|close| {
                let key = &after[..close];
                vars.iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| (close, *v))
            });
            match hit {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// Escapes text for the quoted response slot using JSON string rules.
pub fn escape_quoted(text: &str) -> String {
    let json = serde_json::to_string(text).expect("strings always serialize");
    json[1..json.len() - 1].to_string()
}

fn bullet_lines<S: AsRef<str>>(lines: &[S]) -> String {
    lines
        .iter()
        .map(|s| format!("- {}", s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// First-pass generation prompt: dialogue only, no persona.
pub fn render_generation_prompt(ctx: &DialogueContext) -> String {
    GENERATION.render(&[
        ("speaker", ctx.speaker()),
        ("other", ctx.other()),
        ("dialogue", &ctx.render_dialogue()),
    ])
}

/// Refinement prompt. `memory` is listed one sentence per line in the given
/// order, or as [`EMPTY_MEMORY_LINE`] when empty.
pub fn render_refinement_prompt<S: AsRef<str>>(
    ctx: &DialogueContext,
    general: &str,
    memory: &[S],
) -> String {
    let memory_block = if memory.is_empty() {
        EMPTY_MEMORY_LINE.to_string()
    } else {
        bullet_lines(memory)
    };
    REFINEMENT.render(&[
        ("speaker", ctx.speaker()),
        ("other", ctx.other()),
        ("dialogue", &ctx.render_dialogue()),
        ("response", &escape_quoted(general)),
        ("memory", &memory_block),
    ])
}

/// Single-input prompt carrying every pool sentence ahead of the dialogue.
pub fn render_direct_gen_prompt<S: AsRef<str>>(ctx: &DialogueContext, persona: &[S]) -> String {
    DIRECT_GEN.render(&[
        ("speaker", ctx.speaker()),
        ("other", ctx.other()),
        ("persona", &bullet_lines(persona)),
        ("dialogue", &ctx.render_dialogue()),
    ])
}

/// Generation prompt with retrieved sentences prepended; identical to the
/// plain generation prompt when nothing was retrieved.
pub fn render_dialog_retr_prompt<S: AsRef<str>>(ctx: &DialogueContext, memory: &[S]) -> String {
    if memory.is_empty() {
        return render_generation_prompt(ctx);
    }
    DIALOG_RETR.render(&[
        ("speaker", ctx.speaker()),
        ("other", ctx.other()),
        ("memory", &bullet_lines(memory)),
        ("dialogue", &ctx.render_dialogue()),
    ])
}

pub fn render_extraction_prompt(session: &SessionTranscript) -> String {
    EXTRACTION.render(&[
        ("first", &session.speakers[0]),
        ("second", &session.speakers[1]),
        ("dialogue", &session.render_dialogue()),
    ])
}

/// Summary prompt written from `speaker`'s perspective.
pub fn render_summary_prompt(session: &SessionTranscript, speaker: &str, other: &str) -> String {
    SUMMARY.render(&[
        ("speaker", speaker),
        ("other", other),
        ("dialogue", &session.render_dialogue()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::Turn;

    fn ctx(a: &str, b: &str) -> DialogueContext {
        DialogueContext::new(a, b, vec![Turn::new(b, "Hi there!")]).unwrap()
    }

    const PLACEHOLDERS: [&str; 7] = [
        "{speaker}",
        "{other}",
        "{dialogue}",
        "{response}",
        "{memory}",
        "{persona}",
        "{first}",
    ];

    fn assert_no_placeholders(s: &str) {
        for p in PLACEHOLDERS {
            assert!(!s.contains(p), "residual {p} in:\n{s}");
        }
    }

    #[test]
    fn generation_header_and_task_line() {
        let p = render_generation_prompt(&ctx("Rajiv", "Francisco"));
        assert!(p.starts_with("Rajiv is chatting with Francisco."));
        assert!(p.contains("Output Rajiv's response to Francisco in JSON."));
        assert!(p.ends_with("Format: {Rajiv: <response>}"));
    }

    #[test]
    fn single_character_names_fully_substituted() {
        let p = render_generation_prompt(&ctx("A", "B"));
        assert_no_placeholders(&p);
        // The only braces left are the literal JSON braces of the format line.
        assert_eq!(p.matches('{').count(), 1);
        assert_eq!(p.matches('}').count(), 1);
        let r = render_refinement_prompt(&ctx("A", "B"), "ok", &["A likes B."]);
        assert_no_placeholders(&r);
        assert_eq!(r.matches('{').count(), 1);
        assert!(r.ends_with("Format: {A: <A's refined response>}"));
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let c = DialogueContext::new("A", "B", vec![Turn::new("B", "say {speaker} {memory}")])
            .unwrap();
        let p = render_refinement_prompt(&c, "{other}", &["{dialogue}"]);
        assert!(p.contains("B: say {speaker} {memory}"));
        assert!(p.contains("A was about to reply: \"{other}\""));
        assert!(p.contains("- {dialogue}"));
    }

    #[test]
    fn empty_memory_line() {
        let p = render_refinement_prompt::<&str>(&ctx("A", "B"), "hello", &[]);
        assert!(p.contains(
            "# Task: Refine A's response with the following information:\n(no additional information)\n"
        ));
    }

    #[test]
    fn quotes_escaped_in_response_slot() {
        let p = render_refinement_prompt::<&str>(&ctx("A", "B"), "She said \"hi\"", &[]);
        assert!(p.contains(r#"A was about to reply: "She said \"hi\"""#));
    }

    #[test]
    fn dialog_retr_without_memory_is_plain_generation() {
        let c = ctx("A", "B");
        assert_eq!(
            render_dialog_retr_prompt::<&str>(&c, &[]),
            render_generation_prompt(&c)
        );
    }

    #[test]
    fn direct_gen_with_empty_persona() {
        let c = ctx("A", "B");
        let p = render_direct_gen_prompt::<&str>(&c, &[]);
        assert!(p.contains("# Persona and history of A:\n\n\n# The current conversation"));
        assert_no_placeholders(&p);
    }

    #[test]
    fn templates_are_versioned() {
        for t in [GENERATION, REFINEMENT, DIRECT_GEN, DIALOG_RETR, EXTRACTION, SUMMARY] {
            assert_eq!(t.version, 1);
            assert!(!t.text().ends_with('\n'), "{}", t.name);
        }
    }
}
