use ppa_core::dialogue::{DialogueContext, Turn};
use ppa_core::pipeline::prompts::{
    render_dialog_retr_prompt, render_direct_gen_prompt, render_generation_prompt,
    render_refinement_prompt,
};
use ppa_core::samples;

fn golden(name: &str) -> String {
    let path = format!("{}/tests/fixtures/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

#[test]
fn generation_prompt_matches_golden() {
    assert_eq!(
        render_generation_prompt(&samples::context()),
        golden("generation_improv.txt")
    );
}

#[test]
fn refinement_prompt_matches_golden() {
    let memory = [samples::RAJIV_MEMORY[1], samples::RAJIV_MEMORY[0]];
    assert_eq!(
        render_refinement_prompt(&samples::context(), samples::GENERAL_RESPONSE, &memory),
        golden("refinement_improv.txt")
    );
}

#[test]
fn direct_gen_prompt_matches_golden() {
    assert_eq!(
        render_direct_gen_prompt(&samples::context(), &samples::RAJIV_MEMORY),
        golden("direct_gen_improv.txt")
    );
}

#[test]
fn task_lines_present() {
    let g = render_generation_prompt(&samples::context());
    assert!(g.contains("# Task: Output Rajiv's response to Francisco in JSON."));
    let r = render_refinement_prompt::<&str>(&samples::context(), "x", &[]);
    assert!(r.contains("# Task: Refine Rajiv's response with the following information:"));
}

#[test]
fn dialog_retr_lists_memory_before_dialogue_in_given_order() {
    let ctx = samples::context();
    let p = render_dialog_retr_prompt(&ctx, &["first fact.", "second fact."]);
    let mem = p.find("- first fact.\n- second fact.").unwrap();
    let dialogue = p.find("Francisco: Hey Rajiv!").unwrap();
    assert!(mem < dialogue);
}

#[test]
fn names_with_braces_do_not_leave_placeholders() {
    let ctx = DialogueContext::new("A", "B", vec![Turn::new("B", "{x}")]).unwrap();
    for p in [
        render_generation_prompt(&ctx),
        render_refinement_prompt(&ctx, "y", &["z"]),
        render_direct_gen_prompt(&ctx, &["z"]),
        render_dialog_retr_prompt(&ctx, &["z"]),
    ] {
        for name in ["speaker", "other", "dialogue", "response", "memory", "persona"] {
            assert!(!p.contains(&format!("{{{name}}}")), "{p}");
        }
    }
}
