//! Remote channel API client and a local fixture server speaking the same
//! protocol.
//!
//! Routes, all `GET` with the key in an `x-api-key` header and paged by
//! `?page_token=N`:
//!
//! - `/v1/channels/{id}` → channel
//! - `/v1/channels/{id}/videos` → `{items: [video], next_page_token}`
//! - `/v1/channels/{id}/subscribers` → `{items: [snapshot], next_page_token}`
//! - `/v1/videos/{id}/comments` → `{items: [comment], next_page_token}`
//! - `/v1/videos/{id}/transcript` → transcript, or 404

use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context};
use polarlens_core::archive::{ArchiveParts, Channel, Comment, SubscriberSnapshot, TranscriptDoc, Video};
use polarlens_core::ChannelArchive;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::http::{BackgroundServer, Reply, Request, API_KEY_HEADER};
use crate::io;

/// Environment variable holding the API key, read by both ends.
pub const API_KEY_ENV: &str = "POLARLENS_API_KEY";
pub const PAGE_SIZE: usize = 50;

#[derive(Debug, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    #[serde(default)]
    pub next_page_token: Option<String>,
}

fn page_of<T: Serialize + Clone>(items: &[T], token: Option<&str>) -> Reply {
    let start: usize = match token.map(str::parse).transpose() {
        Ok(s) => s.unwrap_or(0),
        Err(_) => return Reply::error(400, "bad page_token"),
    };
    let end = (start + PAGE_SIZE).min(items.len());
    let next = (end < items.len()).then(|| end.to_string());
    Reply::json(&Page { items: items.get(start..end).unwrap_or_default().to_vec(), next_page_token: next })
}

fn route(archive: &ChannelArchive, key: Option<&str>, req: &Request) -> Reply {
    if let Some(expected) = key {
        if req.api_key.as_deref() != Some(expected) {
            return Reply::error(401, "missing or wrong API key");
        }
    }
    if req.method != "GET" {
        return Reply::error(405, "read-only API");
    }
    let token = req.query_param("page_token");
    let segs: Vec<&str> = req.path.trim_matches('/').split('/').collect();
    match segs[..] {
        ["v1", "channels", id] => match archive.channel(id) {
            Ok(c) => Reply::json(c),
            Err(e) => Reply::error(404, &e.to_string()),
        },
        ["v1", "channels", id, "videos"] => match archive.channel_videos(id) {
            Ok(vs) => page_of(&vs.cloned().collect::<Vec<_>>(), token),
            Err(e) => Reply::error(404, &e.to_string()),
        },
        ["v1", "channels", id, "subscribers"] => {
            let snaps: Vec<SubscriberSnapshot> =
                archive.subscribers().iter().filter(|s| s.channel_id == id).cloned().collect();
            page_of(&snaps, token)
        }
        ["v1", "videos", id, "comments"] => match archive.video(id) {
            Some(v) => page_of(&archive.video_comments(v).cloned().collect::<Vec<_>>(), token),
            None => Reply::error(404, &format!("unknown video `{id}`")),
        },
        ["v1", "videos", id, "transcript"] => match archive.video(id).and_then(|v| v.transcript.as_ref()) {
            Some(t) => Reply::json(t),
            None => Reply::error(404, &format!("no transcript for `{id}`")),
        },
        _ => Reply::error(404, &format!("no route {}", req.path)),
    }
}

/// Serves `archive` read-only; requests must carry `api_key` when given.
pub fn serve_fixture(archive: ChannelArchive, api_key: Option<String>, addr: &str) -> anyhow::Result<BackgroundServer> {
    BackgroundServer::spawn(addr, move |req| route(&archive, api_key.as_deref(), req))
}

pub struct ApiClient {
    base: String,
    key: String,
    agent: ureq::Agent,
}

impl ApiClient {
    pub fn new(base_url: &str, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        ApiClient { base: base_url.trim_end_matches('/').to_string(), key: api_key.into(), agent }
    }

    /// Key from [`API_KEY_ENV`].
    pub fn from_env(base_url: &str) -> anyhow::Result<Self> {
        let key = std::env::var(API_KEY_ENV).with_context(|| format!("set {API_KEY_ENV} to the API key"))?;
        Ok(Self::new(base_url, key))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> anyhow::Result<Option<T>> {
        let url = format!("{}{path}", self.base);
        let mut resp = self
            .agent
            .get(&url)
            .header(API_KEY_HEADER, &self.key)
            .call()
            .with_context(|| format!("GET {url}"))?;
        match resp.status().as_u16() {
            200 => Ok(Some(resp.body_mut().read_json().with_context(|| format!("decoding {url}"))?)),
            404 => Ok(None),
            s => bail!("GET {url}: HTTP {s}: {}", resp.body_mut().read_to_string().unwrap_or_default()),
        }
    }

    fn all_pages<T: DeserializeOwned>(&self, path: &str) -> anyhow::Result<Vec<T>> {
        let mut out = Vec::new();
        let mut token: Option<String> = None;
        loop {
            let url = match &token {
                Some(t) => format!("{path}?page_token={t}"),
                None => path.to_string(),
            };
            let page: Page<T> = self.get(&url)?.with_context(|| format!("{path} not found"))?;
            out.extend(page.items);
            match page.next_page_token {
                Some(t) => token = Some(t),
                None => return Ok(out),
            }
        }
    }

    /// Everything the API holds for the given channels.
    pub fn fetch_channels(&self, channel_ids: &[String]) -> anyhow::Result<ArchiveParts> {
        let mut parts = ArchiveParts::default();
        for id in channel_ids {
            let channel: Channel = self.get(&format!("/v1/channels/{id}"))?.with_context(|| format!("unknown channel `{id}`"))?;
            parts.channels.push(channel);
            let videos: Vec<Video> = self.all_pages(&format!("/v1/channels/{id}/videos"))?;
            for v in &videos {
                parts.comments.extend(self.all_pages::<Comment>(&format!("/v1/videos/{}/comments", v.video_id))?);
                if let Some(t) = self.get::<TranscriptDoc>(&format!("/v1/videos/{}/transcript", v.video_id))? {
                    parts.transcripts.push(t);
                }
            }
            log::info!("{id}: {} videos", videos.len());
            parts.videos.extend(videos);
            parts.subscribers.extend(self.all_pages::<SubscriberSnapshot>(&format!("/v1/channels/{id}/subscribers"))?);
        }
        Ok(parts)
    }

    /// Fetches, validates and writes an archive directory.
    pub fn fetch_to(&self, channel_ids: &[String], out: &Path) -> anyhow::Result<ChannelArchive> {
        let archive = ChannelArchive::from_parts(self.fetch_channels(channel_ids)?)?;
        io::write_archive(out, &archive)?;
        Ok(archive)
    }
}
