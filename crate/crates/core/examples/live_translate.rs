//! Translates one sentence through a real chat-completions backend.
//!
//! ```sh
//! export MY_TOKEN=...
//! CRAT_LIVE_ENDPOINT=https://api.example.com/v1/chat/completions \
//! CRAT_LIVE_MODEL=some-model CRAT_LIVE_TOKEN_ENV=MY_TOKEN \
//!     cargo run --example live_translate -- "Text to translate"
//! ```

use crat::gateway::{Gateway, HttpBackendConfig};
use crat::pipeline::{Pipeline, PipelineConfig, RoleBackends, SourceDocument};
use crat::text::{Lang, LangPair};

fn main() -> anyhow::Result<()> {
    let (Ok(endpoint), Ok(model), Ok(token_env)) = (
        std::env::var("CRAT_LIVE_ENDPOINT"),
        std::env::var("CRAT_LIVE_MODEL"),
        std::env::var("CRAT_LIVE_TOKEN_ENV"),
    ) else {
        eprintln!("set CRAT_LIVE_ENDPOINT, CRAT_LIVE_MODEL and CRAT_LIVE_TOKEN_ENV to run this example");
        return Ok(());
    };
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Visitors to Saigon often bring a phin home to brew their own coffee.".into());

    let mut gw = Gateway::new();
    let id = gw.register_http(HttpBackendConfig::new("live", &endpoint, &token_env, &model))?;
    let pipeline = Pipeline::new(gw, Vec::new(), PipelineConfig::new(RoleBackends::all(&id)))?;
    let r = pipeline.run(&SourceDocument::new("live", text), LangPair::new(Lang::En, Lang::Zh))?;
    for t in &r.terms {
        println!("term: {} ({})", t.surface, t.category.as_str());
    }
    println!("{}", r.target_text);
    Ok(())
}
