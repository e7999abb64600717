//! The repository fetcher against a canned offline transport.
//!
//! The fetcher's logic — token preflight, rate limiting, retries, README
//! decoding, skipping deleted repositories — sits above a [`Transport`]
//! trait, so this example runs the real code paths without any network.
//! For live use, `fetch_records` (or the `repoclass fetch` subcommand, which
//! reads the token from an environment variable) does the same against the
//! hosting service's REST API.
//!
//!     cargo run --example fetch_offline

use base64::Engine as _;

use repoclass::corpus::load_corpus;
use repoclass::error::{Error, Result};
use repoclass::fetch::{fetch_records_with, FetchSpec, HttpResponse, Transport};

struct CannedTransport;

impl Transport for CannedTransport {
    fn get(&self, path: &str, token: Option<&str>) -> Result<HttpResponse> {
        println!("  GET /{path} (token: {})", token.unwrap_or("none"));
        let encoded_readme = base64::engine::general_purpose::STANDARD
            .encode("# stellar-sim\nAn n-body gravity playground.\n");
        let (status, body) = match path {
            "user" => (200, r#"{"login":"octo-demo"}"#.to_string()),
            "repos/acme/stellar-sim" => (
                200,
                r#"{"name":"stellar-sim","owner":{"login":"acme"},
                    "description":"N-body orbital mechanics sandbox",
                    "topics":["physics","simulation"]}"#
                    .to_string(),
            ),
            "repos/acme/stellar-sim/readme" => (
                200,
                format!(r#"{{"content":"{encoded_readme}","encoding":"base64"}}"#),
            ),
            "repos/orbit/parser-kit" => (
                200,
                r#"{"name":"parser-kit","owner":{"login":"orbit"},
                    "description":"grammar tooling","topics":[]}"#
                    .to_string(),
            ),
            "repos/orbit/parser-kit/readme" => (404, r#"{"message":"Not Found"}"#.to_string()),
            "repos/acme/retired-tool" => (404, r#"{"message":"Not Found"}"#.to_string()),
            other => return Err(Error::Fetch(format!("unexpected request: {other}"))),
        };
        Ok(HttpResponse {
            status,
            body: body.into_bytes(),
        })
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("corpus.jsonl");

    let mut spec = FetchSpec::new(
        vec![
            "acme/stellar-sim".into(),
            "acme/retired-tool".into(),
            "orbit/parser-kit".into(),
        ],
        &out,
    );
    spec.token = Some("demo-token".into());
    spec.concurrency = 1; // keep the request log readable

    println!("requests made:");
    let written = fetch_records_with(&spec, &CannedTransport)?;
    println!(
        "\nwrote {written} of {} repositories (deleted ones are skipped)\n",
        spec.slugs.len()
    );

    for record in load_corpus(&out)? {
        println!(
            "{}: user {}, tags {:?}, readme {} bytes, description {:?}",
            record.id,
            record.user,
            record.tags,
            record.readme.len(),
            record.description
        );
    }
    Ok(())
}
