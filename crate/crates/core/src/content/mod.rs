//! Deterministic synthetic blog content and the simulated upstream content API.
//!
//! Every post is derived only from `(seed, id)`: the per-post generator is
//! seeded with `mix(seed ^ mix(id))` (see [`prng`]), so any single post can be
//! produced without generating its predecessors.

pub mod prng;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::digest::{Digest, FieldHasher};
use prng::{mix, SplitMix64};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContentError {
    #[error("post {id} not found (post_count = {count})")]
    NotFound { id: u64, count: usize },
    #[error("invalid post shape: {0}")]
    InvalidShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Default for Seed {
    fn default() -> Self {
        Seed(42)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: u64,
    pub slug: String,
    pub title: String,
    /// Plain text, no markup.
    pub body: String,
}

impl Post {
    pub fn word_count(&self) -> usize {
        self.body.split_whitespace().count()
    }
}

/// Bounds on generated body length, in words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostShape {
    pub min_words: u32,
    pub max_words: u32,
}

impl Default for PostShape {
    fn default() -> Self {
        Self {
            min_words: 50,
            max_words: 500,
        }
    }
}

impl PostShape {
    pub fn validate(&self) -> Result<(), ContentError> {
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(ContentError::InvalidShape(format!(
                "need 0 < min_words <= max_words, got {}..={}",
                self.min_words, self.max_words
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpstreamConfig {
    pub delay: Duration,
    pub post_count: usize,
    pub shape: PostShape,
}

impl Default for UpstreamConfig {
    fn default() -> Self {
        Self {
            delay: Duration::from_millis(100),
            post_count: 100,
            shape: PostShape::default(),
        }
    }
}

const LEXICON: &[&str] = &[
    "lorem", "ipsum", "dolor", "sit", "amet", "consectetur", "adipiscing", "elit", "sed", "do",
    "eiusmod", "tempor", "incididunt", "ut", "labore", "et", "dolore", "magna", "aliqua", "enim",
    "ad", "minim", "veniam", "quis", "nostrud", "exercitation", "ullamco", "laboris", "nisi",
    "aliquip", "ex", "ea", "commodo", "consequat", "duis", "aute", "irure", "in",
    "reprehenderit", "voluptate", "velit", "esse", "cillum", "fugiat", "nulla", "pariatur",
    "excepteur", "sint", "occaecat", "cupidatat", "non", "proident", "sunt", "culpa", "qui",
    "officia", "deserunt", "mollit", "anim", "id", "est", "laborum", "edge", "cache", "static",
    "render", "worker", "deploy",
];

pub fn slug_for(id: u64) -> String {
    format!("post-{id}")
}

/// Inverse of [`slug_for`]; rejects anything that is not exactly `post-<id>`.
pub fn id_from_slug(slug: &str) -> Option<u64> {
    let digits = slug.strip_prefix("post-")?;
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn word(rng: &mut SplitMix64) -> &'static str {
    LEXICON[rng.below(LEXICON.len() as u64) as usize]
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(first) => first.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

pub fn generate_post(seed: Seed, id: u64, shape: &PostShape) -> Post {
    let mut rng = SplitMix64::new(mix(seed.0 ^ mix(id)));

    let title_len = rng.range_inclusive(3, 7);
    let title = (0..title_len)
        .map(|i| {
            let w = word(&mut rng);
            if i == 0 {
                capitalize(w)
            } else {
                w.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ");

    let total = rng.range_inclusive(shape.min_words as u64, shape.max_words as u64);
    let mut body = String::with_capacity(total as usize * 8);
    let mut written = 0;
    while written < total {
        let sentence = rng.range_inclusive(5, 14).min(total - written);
        for i in 0..sentence {
            if written > 0 {
                body.push(' ');
            }
            let w = word(&mut rng);
            if i == 0 {
                body.push_str(&capitalize(w));
            } else {
                body.push_str(w);
            }
            written += 1;
        }
        body.push('.');
    }

    Post {
        id,
        slug: slug_for(id),
        title,
        body,
    }
}

pub fn generate_posts_with(seed: Seed, count: usize, shape: &PostShape) -> Vec<Post> {
    (0..count as u64)
        .map(|id| generate_post(seed, id, shape))
        .collect()
}

/// `count` posts with the default shape, ordered by id.
pub fn generate_posts(seed: Seed, count: usize) -> Vec<Post> {
    generate_posts_with(seed, count, &PostShape::default())
}

/// Order-sensitive digest over every field of every post.
pub fn content_digest(posts: &[Post]) -> Digest {
    let mut h = FieldHasher::new("edgelab/content/v1");
    h.u64(posts.len() as u64);
    for p in posts {
        h.u64(p.id).str(&p.slug).str(&p.title).str(&p.body);
    }
    h.finish()
}

pub fn post_digest(post: &Post) -> Digest {
    let mut h = FieldHasher::new("edgelab/post/v1");
    h.u64(post.id).str(&post.slug).str(&post.title).str(&post.body);
    h.finish()
}

/// The content API the edge variants render from. Every call costs `delay`
/// on the supplied clock; concurrent calls overlap rather than queue.
#[derive(Debug, Clone)]
pub struct Upstream {
    posts: Arc<[Post]>,
    delay: Duration,
}

impl Upstream {
    pub fn new(posts: Arc<[Post]>, delay: Duration) -> Self {
        Self { posts, delay }
    }

    pub fn generated(seed: Seed, cfg: &UpstreamConfig) -> Self {
        Self::new(
            generate_posts_with(seed, cfg.post_count, &cfg.shape).into(),
            cfg.delay,
        )
    }

    pub fn delay(&self) -> Duration {
        self.delay
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub async fn fetch(&self, post_id: u64, clock: &Clock) -> Result<Post, ContentError> {
        let post = self
            .posts
            .get(post_id as usize)
            .ok_or(ContentError::NotFound {
                id: post_id,
                count: self.posts.len(),
            })?
            .clone();
        clock.sleep(self.delay).await;
        Ok(post)
    }

    /// The full listing, as needed to render the index.
    pub async fn fetch_all(&self, clock: &Clock) -> Arc<[Post]> {
        clock.sleep(self.delay).await;
        self.posts.clone()
    }
}

/// Fetches one generated post through a fresh upstream.
pub async fn upstream_fetch(
    seed: Seed,
    post_id: u64,
    cfg: &UpstreamConfig,
    clock: &Clock,
) -> Result<Post, ContentError> {
    if post_id as usize >= cfg.post_count {
        return Err(ContentError::NotFound {
            id: post_id,
            count: cfg.post_count,
        });
    }
    let post = generate_post(seed, post_id, &cfg.shape);
    clock.sleep(cfg.delay).await;
    Ok(post)
}
