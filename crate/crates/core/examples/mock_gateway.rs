//! Scripted backend behind the gateway, with the on-disk response cache.

use crat::gateway::{ChatMessage, ChatParams, ChatRequest, Fallback, Gateway, MockBackend, ResponseCache};

fn main() -> anyhow::Result<()> {
    let cache = tempfile::tempdir()?;
    let mock = MockBackend::new()
        .on_contains("weather", "It is sunny.")
        .with_fallback(Fallback::EchoLastUser);
    let mut gw = Gateway::new().with_cache(ResponseCache::new(cache.path()));
    gw.register_mock("mock", mock)?;

    for question in ["How is the weather?", "Repeat after me", "How is the weather?"] {
        let req = ChatRequest::new("mock", vec![ChatMessage::user(question)], ChatParams::default());
        let ex = gw.complete(req)?;
        println!("{question:<22} -> {:<18} cache_hit={} fp={}", ex.response_text, ex.cache_hit, &ex.fingerprint[..12]);
    }
    Ok(())
}
