use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cone_core::gateway::mock::{CannedLlm, ConstantLlm, ExactMatchEntailment, PromptAwareLlm, SubstringEntailment};
use cone_core::gateway::{CallCache, Gateway, HttpEntailment, HttpLlm};

pub struct BackendChoice {
    pub llm: String,
    pub nli: String,
    pub cache: Option<PathBuf>,
    pub concurrency: usize,
}

pub fn build_gateway(choice: &BackendChoice) -> Result<Gateway> {
    let mut builder = Gateway::builder().concurrency(choice.concurrency);
    if let Some(path) = &choice.cache {
        let cache = CallCache::open(path).with_context(|| format!("opening cache {}", path.display()))?;
        builder = builder.cache(Arc::new(cache));
    }
    builder = match choice.llm.as_str() {
        "http" => match HttpLlm::from_env() {
            Some(b) => builder.llm(b),
            None => {
                log::debug!("CONE_LLM_ENDPOINT/CONE_LLM_MODEL not set; LLM calls will fail");
                builder
            }
        },
        "mock" => builder.llm(PromptAwareLlm),
        "yes" | "no" => builder.llm(ConstantLlm::new(choice.llm.clone())),
        other => match other.strip_prefix("canned:") {
            Some(file) => {
                let text = std::fs::read_to_string(file).with_context(|| format!("reading canned replies {file}"))?;
                let replies: BTreeMap<String, String> =
                    serde_json::from_str(&text).with_context(|| format!("parsing canned replies {file}"))?;
                builder.llm(CannedLlm::new(replies))
            }
            None => bail!("unknown --llm backend `{other}` (expected http, mock, yes, no or canned:<file>)"),
        },
    };
    builder = match choice.nli.as_str() {
        "http" => match HttpEntailment::from_env() {
            Some(b) => builder.entailment(b),
            None => {
                log::debug!("CONE_NLI_ENDPOINT not set; entailment calls will fail");
                builder
            }
        },
        "exact" => builder.entailment(ExactMatchEntailment),
        "substring" => builder.entailment(SubstringEntailment),
        other => bail!("unknown --nli backend `{other}` (expected http, exact or substring)"),
    };
    Ok(builder.build())
}
