//! Prompt rendering.
//!
//! A template is written as a single 1-shot prompt containing the slots
//! `{example_review}`, `{example_label}` and `{user_review}`. It is split
//! into three parts:
//!
//! * the instruction: everything before the line holding `{example_review}`
//!   (this includes the `### Example` header);
//! * the example block: from that line through the line holding
//!   `{example_label}`;
//! * the output block: the remainder, which must end with `Rating:`
//!   (optionally followed by a `_` placeholder, which is dropped).
//!
//! k-shot prompts repeat the example block under the single header, one
//! blank line apart. Rendered prompts end with `Rating: ` so the model's one
//! generated token is the rating digit.

use std::path::Path;

use crate::error::{Error, Result};

pub const SLOT_EXAMPLE_REVIEW: &str = "{example_review}";
pub const SLOT_EXAMPLE_LABEL: &str = "{example_label}";
pub const SLOT_USER_REVIEW: &str = "{user_review}";
pub const RATING_CUE: &str = "Rating: ";

pub const DEFAULT_TEMPLATE: &str = "### Instruction
You are a helpful assistant evaluating the review texts about the restaurant. Please evaluate the review text and assign an integer score ranging from 1 for the most negative comment to 5 for the most positive comment.

### Example
User review: {example_review}
Rating: {example_label}

### Output
User review: {user_review}
Rating: _";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub instruction: String,
    pub example_block: String,
    pub output_block: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("built-in template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Template(m.to_string());
        let review_at = text
            .find(SLOT_EXAMPLE_REVIEW)
            .ok_or_else(|| bad("missing {example_review}"))?;
        let label_at = text
            .find(SLOT_EXAMPLE_LABEL)
            .ok_or_else(|| bad("missing {example_label}"))?;
        if label_at < review_at {
            return Err(bad("{example_label} must follow {example_review}"));
        }
        let block_start = text[..review_at].rfind('\n').map_or(0, |i| i + 1);
        let block_end = text[label_at..].find('\n').map_or(text.len(), |i| label_at + i + 1);
        let output = &text[block_end..];
        if !output.contains(SLOT_USER_REVIEW) {
            return Err(bad("missing {user_review} after the example block"));
        }
        let trimmed = output.trim_end();
        let trimmed = trimmed.strip_suffix('_').unwrap_or(trimmed).trim_end();
        let cue = RATING_CUE.trim_end();
        if !trimmed.ends_with(cue) {
            return Err(bad("output block must end with `Rating:`"));
        }
        let mut example_block = text[block_start..block_end].to_string();
        if !example_block.ends_with('\n') {
            example_block.push('\n');
        }
        Ok(Self {
            instruction: text[..block_start].to_string(),
            example_block,
            output_block: format!("{trimmed} "),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders the prompt for `user_review` with the exemplars in order.
    pub fn render(&self, examples: &[(&str, u8)], user_review: &str) -> Result<String> {
        render_prompt(self, examples, user_review)
    }
}

pub fn render_prompt(template: &PromptTemplate, examples: &[(&str, u8)], user_review: &str) -> Result<String> {
    if examples.is_empty() {
        return Err(Error::Template("at least one example is required".into()));
    }
    if user_review.trim().is_empty() {
        return Err(Error::Empty("user review"));
    }
    let mut out = template.instruction.clone();
    for (i, &(text, label)) in examples.iter().enumerate() {
        if !(1..=5).contains(&label) {
            return Err(Error::InvalidLabel(i64::from(label)));
        }
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&fill(
            &template.example_block,
            &[(SLOT_EXAMPLE_REVIEW, text), (SLOT_EXAMPLE_LABEL, &label.to_string())],
        ));
    }
    out.push_str(&fill(&template.output_block, &[(SLOT_USER_REVIEW, user_review)]));
    Ok(out)
}

/// Single-pass slot substitution; inserted text is never rescanned.
fn fill(block: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(block.len());
    let mut rest = block;
    loop {
        let next = slots
            .iter()
            .filter_map(|(slot, value)| rest.find(slot).map(|i| (i, *slot, *value)))
            .min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, slot, value)) => {
                out.push_str(&rest[..i]);
                out.push_str(value);
                rest = &rest[i + slot.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_shot_matches_reference_layout() {
        let p = PromptTemplate::default().render(&[("Great food", 5)], "Bad").unwrap();
        let expected = DEFAULT_TEMPLATE
            .replace("{example_review}", "Great food")
            .replace("{example_label}", "5")
            .replace("{user_review}", "Bad")
            .replace("Rating: _", "Rating: ");
        assert_eq!(p, expected);
        assert_eq!(p.matches("Rating: 5").count(), 1);
        assert!(p.ends_with("Rating: "));
    }

    #[test]
    fn five_shot_repeats_example_block() {
        let ex: Vec<(&str, u8)> = vec![("a", 1), ("b", 2), ("c", 3), ("d", 4), ("e", 5)];
        let p = PromptTemplate::default().render(&ex, "query").unwrap();
        let output_at = p.find("### Output").unwrap();
        assert_eq!(p[..output_at].matches("User review:").count(), 5);
        assert_eq!(p[output_at..].matches("User review:").count(), 1);
        assert_eq!(p.matches("### Example").count(), 1);
        assert!(p.contains("Rating: 2\n\nUser review: c\n"));
    }

    #[test]
    fn empty_review_rejected() {
        assert!(PromptTemplate::default().render(&[("x", 3)], "  ").is_err());
        assert!(PromptTemplate::default().render(&[], "x").is_err());
        assert!(PromptTemplate::default().render(&[("x", 6)], "y").is_err());
    }

    #[test]
    fn example_text_is_not_rescanned() {
        let p = PromptTemplate::default()
            .render(&[("says {user_review} literally", 3)], "q")
            .unwrap();
        assert!(p.contains("User review: says {user_review} literally\n"));
    }

    #[test]
    fn custom_template_without_underscore() {
        let t =
            PromptTemplate::parse("Rate it.\nR: {example_review}\nRating: {example_label}\nR: {user_review}\nRating:")
                .unwrap();
        assert_eq!(
            t.render(&[("x", 2)], "y").unwrap(),
            "Rate it.\nR: x\nRating: 2\nR: y\nRating: "
        );
    }

    #[test]
    fn invalid_templates() {
        assert!(PromptTemplate::parse("no slots").is_err());
        assert!(PromptTemplate::parse("{example_review}\n{example_label}\n{user_review}\nScore:").is_err());
        assert!(PromptTemplate::parse("{example_review}\n{example_label}\nRating:").is_err());
    }

    proptest::proptest! {
        #[test]
        fn texts_appear_verbatim(text in "[^\\n]{1,40}", review in "[a-z ]{0,20}[a-z]", label in 1u8..=5) {
            let t = PromptTemplate::default();
            let a = t.render(&[(text.as_str(), label)], &review).unwrap();
            let b = t.render(&[(text.as_str(), label)], &review).unwrap();
            proptest::prop_assert_eq!(&a, &b);
            let needle = format!("User review: {text}\n");
            proptest::prop_assert!(a.contains(&needle));
            proptest::prop_assert!(a.ends_with(RATING_CUE));
        }
    }
}
