//! Zero-shot prompt templates for nugget extraction and nugget-to-response
//! matching, plus the inverse parsers the prompt-aware mocks rely on.

const EXTRACTION_INSTRUCTION: &str = "# Instruction: I will give you a user query and a text to the user query. \
You should extract the nuggets of information related to the user query from the given text. \
The nuggets should be an exact copy of a span of text from the text. \
Please extract the nuggets and write each nugget in one line. \
If there is no nugget of information in the given text, please only say \"No nugget\".";

const EXTRACTION_QUERY: &str = "# User query: ";
const EXTRACTION_TEXT: &str = "# Text: ";
const EXTRACTION_TRAILER: &str = "\n(Please copy exact spans from the text as nuggets)\n# Nuggets:";

/// Completion line meaning "nothing to extract".
pub const NO_NUGGET: &str = "No nugget";

pub fn extraction_prompt(resolved_utterance: &str, text: &str) -> String {
    format!("{EXTRACTION_INSTRUCTION}\n\n{EXTRACTION_QUERY}{resolved_utterance}\n{EXTRACTION_TEXT}{text}{EXTRACTION_TRAILER}\n")
}

/// Recovers `(query, text)` from an [`extraction_prompt`].
pub fn parse_extraction_prompt(prompt: &str) -> Option<(&str, &str)> {
    let rest = prompt.strip_prefix(EXTRACTION_INSTRUCTION)?.strip_prefix("\n\n")?.strip_prefix(EXTRACTION_QUERY)?;
    let (query, rest) = rest.split_once(&format!("\n{EXTRACTION_TEXT}"))?;
    let end = rest.rfind(EXTRACTION_TRAILER)?;
    Some((query, &rest[..end]))
}

const NTR_INSTRUCTION: &str = "# Instruction: I will provide you with a response and a gold information piece. \
Your task is to determine whether the response captures this piece of information or not.";
const NTR_GOLD: &str = "# Gold Information: ";
const NTR_RESPONSE: &str = "# Response: ";
const NTR_TRAILER: &str = "\n# Please answer the following:\n\
Does the Response capture the Gold Information? Only respond with \"yes\" or \"no\" without further explanation.\n\
# Answer (yes/no):";

pub fn ntr_prompt(gold_nugget: &str, response: &str) -> String {
    format!("{NTR_INSTRUCTION}\n\n{NTR_GOLD}{gold_nugget}\n{NTR_RESPONSE}{response}{NTR_TRAILER}\n")
}

/// Recovers `(gold nugget, response)` from an [`ntr_prompt`].
pub fn parse_ntr_prompt(prompt: &str) -> Option<(&str, &str)> {
    let rest = prompt.strip_prefix(NTR_INSTRUCTION)?.strip_prefix("\n\n")?.strip_prefix(NTR_GOLD)?;
    let (gold, rest) = rest.split_once(&format!("\n{NTR_RESPONSE}"))?;
    let end = rest.rfind(NTR_TRAILER)?;
    Some((gold, &rest[..end]))
}

/// Passage relevance grading prompt (0-4 scale). Versioned asset; bump the
/// file name when the wording changes so cached grades are not reused.
pub const RELEVANCE_PROMPT_V1: &str = include_str!("../assets/relevance_prompt_v1.txt");

pub fn relevance_prompt(query: &str, passage: &str) -> String {
    RELEVANCE_PROMPT_V1.replace("{query}", query).replace("{passage}", passage)
}

/// Recovers `(query, passage)` from a [`relevance_prompt`].
pub fn parse_relevance_prompt(prompt: &str) -> Option<(&str, &str)> {
    let (head, rest) = RELEVANCE_PROMPT_V1.split_once("{query}")?;
    let (mid, tail) = rest.split_once("{passage}")?;
    let body = prompt.strip_prefix(head)?.strip_suffix(tail)?;
    body.split_once(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extraction_prompt_layout() {
        let p = extraction_prompt("which plant?", "Snake plants tolerate drought.");
        assert!(p.starts_with("# Instruction: I will give you a user query"));
        assert!(p.contains("please only say \"No nugget\".\n\n# User query: which plant?\n# Text: Snake plants tolerate drought.\n(Please copy exact spans from the text as nuggets)\n# Nuggets:\n"));
        assert_eq!(parse_extraction_prompt(&p), Some(("which plant?", "Snake plants tolerate drought.")));
        let multi = extraction_prompt("q", "line one\n# Text: tricky\nline two");
        assert_eq!(parse_extraction_prompt(&multi), Some(("q", "line one\n# Text: tricky\nline two")));
        assert_eq!(parse_extraction_prompt("hello"), None);
    }

    #[test]
    fn ntr_prompt_layout() {
        let p = ntr_prompt("tolerate drought", "Snake plants tolerate drought.");
        assert!(p.contains("# Gold Information: tolerate drought\n# Response: Snake plants tolerate drought.\n# Please answer the following:\n"));
        assert!(p.ends_with("without further explanation.\n# Answer (yes/no):\n"));
        assert_eq!(parse_ntr_prompt(&p), Some(("tolerate drought", "Snake plants tolerate drought.")));
        assert_eq!(parse_ntr_prompt(&extraction_prompt("a", "b")), None);
    }

    #[test]
    fn relevance_prompt_substitutes() {
        let p = relevance_prompt("Q?", "P.");
        assert_eq!(parse_relevance_prompt(&p), Some(("Q?", "P.")));
        assert_eq!(parse_relevance_prompt("Grade:"), None);
        assert!(p.contains("Q?") && p.contains("P."));
        assert!(!p.contains("{query}") && !p.contains("{passage}"));
    }
}
