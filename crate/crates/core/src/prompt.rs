//! Evaluation-protocol prompts.

pub const CAPTION_PROMPT: &str = "Please help me describe the image in detail.";

/// Object-existence question for POPE-style probing.
pub fn binary_probe(object: &str) -> String {
    format!("Is there a {object} in the image?")
}

#[cfg(test)]
mod tests {
    #[test]
    fn probe_text() {
        assert_eq!(super::binary_probe("dog"), "Is there a dog in the image?");
    }
}
