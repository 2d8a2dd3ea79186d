mod common;

use vqa_harness::exemplars::Exemplar;
use vqa_harness::templates::{
    builtin_registry, render, render_exemplar_block, FewShotSetting, PromptContext, TemplateError, TemplateFamily,
};

fn caption_exemplars() -> Vec<Exemplar> {
    let shots = [
        (
            "A photo of a person taking a tray of chocolate muffins out of the oven.",
            "What is the likely flavor of these muffins? Blueberry, pumpkin, banana or red velvet?",
            "Red velvet",
        ),
        (
            "A photo of a laptop and a donut on a table the orange mug to the left of the donut is made of plastic.",
            "What material is the orange mug to the left of the donut made out of? Ceramic, glass, metal or plastic?",
            "Glass",
        ),
        (
            "A photo of a box of red velvet cupcakes.",
            "Which cupcake is alcohol-free? Red velvet, cherry amaretto, strawberry daiquiri or bailey's chocolate?",
            "Red velvet",
        ),
        (
            "A photo of a little girl eating a piece of cake with white icing.",
            "The white part of the icing here is likely flavored with what? Onion, vanilla, potato or peppermint?",
            "Vanilla",
        ),
        (
            "A photo of a table with plates of breakfast food with yellow fruits on top of the pancake.",
            "What color are the fruits sliced out on top of the pancake? Red, white, blue or pink?",
            "White",
        ),
    ];
    shots
        .iter()
        .map(|(caption, q, a)| {
            let mut ex = Exemplar::new(*q, *a);
            ex.caption = Some(caption.to_string());
            ex
        })
        .collect()
}

fn cupcake_ctx() -> PromptContext {
    let mut ctx = PromptContext::new("What is the white substance on top of the cupcakes?")
        .with_options(["Mayo", "ice cream", "butter", "icing"])
        .with_instruction("Your task is to answer a knowledge based question.");
    ctx.caption = Some("A photo of a person holding a cupcake with whipped cream on top.".into());
    ctx
}

#[test]
fn caption_few_shot_matches_golden() {
    let registry = builtin_registry();
    let golden = std::fs::read_to_string(common::fixture("caption_fewshot_golden.txt")).unwrap();
    let got = render_exemplar_block(registry.get("qa").unwrap(), &caption_exemplars(), FewShotSetting::Caption, &cupcake_ctx())
        .unwrap();
    assert_eq!(got, golden);
}

#[test]
fn few_shot_limits_and_missing_fields() {
    let registry = builtin_registry();
    let qa = registry.get("qa").unwrap();
    let mut six = caption_exemplars();
    six.push(six[0].clone());
    assert!(matches!(
        render_exemplar_block(qa, &six, FewShotSetting::Caption, &cupcake_ctx()),
        Err(TemplateError::TooManyExemplars(6))
    ));
    let plain = vec![Exemplar::new("What is it?", "a cat")];
    assert!(matches!(
        render_exemplar_block(qa, &plain, FewShotSetting::Cot, &cupcake_ctx()),
        Err(TemplateError::ExemplarFieldMissing { index: 0, field: "rationale" })
    ));
    assert!(matches!(
        render_exemplar_block(qa, &plain, FewShotSetting::Caption, &cupcake_ctx()),
        Err(TemplateError::ExemplarFieldMissing { index: 0, field: "caption" })
    ));
}

#[test]
fn zero_exemplars_is_zero_shot() {
    let registry = builtin_registry();
    let qa = registry.get("qa").unwrap();
    let ctx = PromptContext::new("What is this?");
    assert_eq!(
        render_exemplar_block(qa, &[], FewShotSetting::Standard, &ctx).unwrap(),
        render(qa, &ctx).unwrap().text
    );
}

#[test]
fn cot_few_shot_ends_with_rationale_slot() {
    let registry = builtin_registry();
    let mut ex = Exemplar::new("What sport is this?", "tennis");
    ex.rationale = Some("The man holds a racket on a court.".into());
    let out = render_exemplar_block(
        registry.get("qa").unwrap(),
        &[ex],
        FewShotSetting::Cot,
        &PromptContext::new("What can this vehicle be used for?"),
    )
    .unwrap();
    assert!(out.contains("Question: What sport is this?\nRationale: The man holds a racket on a court.\nAnswer: tennis"));
    assert!(out.ends_with("Question: What can this vehicle be used for?\nRationale:"));
}

#[test]
fn registry_round_trips_through_json() {
    let registry = builtin_registry();
    let again = vqa_harness::templates::TemplateRegistry::from_json(&registry.to_json()).unwrap();
    assert_eq!(registry.names().collect::<Vec<_>>(), again.names().collect::<Vec<_>>());
    let cot = registry.iter().filter(|t| t.family == TemplateFamily::Cot).count();
    assert!(cot >= 1);
}
