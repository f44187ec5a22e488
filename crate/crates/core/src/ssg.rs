//! Static site generation: page templates, full builds, incremental rebuilds
//! and directory export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{content_digest, id_from_slug, post_digest, slug_for, Post};
use crate::digest::{Digest, FieldHasher};

pub const INDEX_PATH: &str = "/";

#[derive(Debug, Error)]
pub enum SsgError {
    #[error("inconsistent build: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeployId(pub u64);

impl DeployId {
    pub fn next(self) -> DeployId {
        DeployId(self.0 + 1)
    }
}

impl fmt::Display for DeployId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPage {
    path: String,
    body: Bytes,
    content_hash: Digest,
}

impl RenderedPage {
    pub fn new(path: impl Into<String>, body: impl Into<Bytes>) -> Self {
        let body = body.into();
        Self {
            path: path.into(),
            content_hash: Digest::of(&body),
            body,
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn body(&self) -> &Bytes {
        &self.body
    }

    pub fn content_hash(&self) -> Digest {
        self.content_hash
    }
}

/// Where a request path points inside a site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    Index,
    Post(u64),
}

impl Route {
    /// Accepts `/`, `/index.html`, `/posts/<slug>` and `/posts/<slug>/` (and
    /// the exported `/posts/<slug>/index.html`).
    pub fn parse(path: &str) -> Option<Route> {
        if path == INDEX_PATH || path == "/index.html" {
            return Some(Route::Index);
        }
        let rest = path.strip_prefix("/posts/")?;
        let slug = rest
            .strip_suffix("/index.html")
            .or_else(|| rest.strip_suffix('/'))
            .unwrap_or(rest);
        id_from_slug(slug).map(Route::Post)
    }
}

pub fn post_path(post: &Post) -> String {
    format!("/posts/{}", post.slug)
}

fn escape_into(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
}

fn escape(text: &str) -> String {
    let mut s = String::with_capacity(text.len());
    escape_into(&mut s, text);
    s
}

fn layout(title: &str, main: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n\
         <meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n\
         <title>{title}</title>\n</head>\n<body>\n<main>\n{main}</main>\n</body>\n</html>\n",
        title = escape(title),
    )
}

pub fn render_index(posts: &[Post]) -> RenderedPage {
    let mut main = String::from("<h1>Blog</h1>\n<ul>\n");
    for post in posts {
        main.push_str("<li><a href=\"");
        escape_into(&mut main, &post_path(post));
        main.push_str("\">");
        escape_into(&mut main, &post.title);
        main.push_str("</a></li>\n");
    }
    main.push_str("</ul>\n");
    RenderedPage::new(INDEX_PATH, layout("Blog", &main))
}

pub fn render_post(post: &Post) -> RenderedPage {
    let mut main = String::new();
    let _ = write!(
        main,
        "<article>\n<h1>{}</h1>\n<p>{}</p>\n</article>\n<nav><a href=\"/\">All posts</a></nav>\n",
        escape(&post.title),
        escape(&post.body)
    );
    RenderedPage::new(post_path(post), layout(&post.title, &main))
}

/// Digest of the fields the index page depends on: count, slugs and titles.
fn index_digest(posts: &[Post]) -> Digest {
    let mut h = FieldHasher::new("edgelab/index/v1");
    h.u64(posts.len() as u64);
    for p in posts {
        h.u64(p.id).str(&p.slug).str(&p.title);
    }
    h.finish()
}

/// An immutable deploy snapshot: the rendered pages plus the source they
/// came from.
#[derive(Debug, Clone)]
pub struct SiteBuild {
    deploy_id: DeployId,
    pages: BTreeMap<String, RenderedPage>,
    source_digest: Digest,
    built_at_ms: u64,
    posts: Arc<[Post]>,
    post_digests: Vec<Digest>,
    index_digest: Digest,
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn build_site(posts: &[Post], prev_deploy_id: DeployId) -> SiteBuild {
    let mut pages = BTreeMap::new();
    let index = render_index(posts);
    pages.insert(index.path().to_string(), index);
    for post in posts {
        let page = render_post(post);
        pages.insert(page.path().to_string(), page);
    }
    SiteBuild::assemble(prev_deploy_id.next(), posts, pages)
}

/// Rebuilds only what changed since `prev`. The result is page-for-page
/// identical to `build_site(posts, prev.deploy_id())`.
pub fn incremental_rebuild(prev: &SiteBuild, posts: &[Post]) -> (SiteBuild, BTreeSet<String>) {
    let mut rebuilt = BTreeSet::new();
    let mut pages = BTreeMap::new();

    if index_digest(posts) == prev.index_digest {
        let index = prev.pages[INDEX_PATH].clone();
        pages.insert(index.path().to_string(), index);
    } else {
        let index = render_index(posts);
        rebuilt.insert(index.path().to_string());
        pages.insert(index.path().to_string(), index);
    }

    for (i, post) in posts.iter().enumerate() {
        let path = post_path(post);
        let reusable = prev.post_digests.get(i) == Some(&post_digest(post))
            && prev.pages.contains_key(&path);
        let page = if reusable {
            prev.pages[&path].clone()
        } else {
            rebuilt.insert(path.clone());
            render_post(post)
        };
        pages.insert(path, page);
    }

    (
        SiteBuild::assemble(prev.deploy_id.next(), posts, pages),
        rebuilt,
    )
}

impl SiteBuild {
    fn assemble(
        deploy_id: DeployId,
        posts: &[Post],
        pages: BTreeMap<String, RenderedPage>,
    ) -> Self {
        Self {
            deploy_id,
            pages,
            source_digest: content_digest(posts),
            built_at_ms: unix_ms(),
            post_digests: posts.iter().map(post_digest).collect(),
            index_digest: index_digest(posts),
            posts: posts.to_vec().into(),
        }
    }

    /// Reassembles a build from previously exported pages, checking that the
    /// pages are exactly the ones `posts` would produce paths for.
    pub fn from_parts(
        deploy_id: DeployId,
        posts: &[Post],
        pages: impl IntoIterator<Item = RenderedPage>,
    ) -> Result<Self, SsgError> {
        let pages: BTreeMap<String, RenderedPage> = pages
            .into_iter()
            .map(|p| (p.path().to_string(), p))
            .collect();
        let expected: BTreeSet<String> = std::iter::once(INDEX_PATH.to_string())
            .chain(posts.iter().map(post_path))
            .collect();
        let actual: BTreeSet<String> = pages.keys().cloned().collect();
        if expected != actual {
            return Err(SsgError::Inconsistent(format!(
                "expected {} pages, found {} (missing: {:?}, extra: {:?})",
                expected.len(),
                actual.len(),
                expected.difference(&actual).take(3).collect::<Vec<_>>(),
                actual.difference(&expected).take(3).collect::<Vec<_>>(),
            )));
        }
        Ok(Self::assemble(deploy_id, posts, pages))
    }

    pub fn deploy_id(&self) -> DeployId {
        self.deploy_id
    }

    pub fn pages(&self) -> &BTreeMap<String, RenderedPage> {
        &self.pages
    }

    pub fn page(&self, path: &str) -> Option<&RenderedPage> {
        self.pages.get(path)
    }

    pub fn source_digest(&self) -> Digest {
        self.source_digest
    }

    pub fn built_at_ms(&self) -> u64 {
        self.built_at_ms
    }

    pub fn posts(&self) -> &Arc<[Post]> {
        &self.posts
    }

    /// The canonical page path for a route, if the route exists in this build.
    pub fn resolve(&self, route: &Route) -> Option<String> {
        match route {
            Route::Index => Some(INDEX_PATH.to_string()),
            Route::Post(id) => self
                .posts
                .get(*id as usize)
                .filter(|p| p.slug == slug_for(*id))
                .map(post_path),
        }
    }

    /// Path → content hash, in path order.
    pub fn page_hashes(&self) -> BTreeMap<&str, Digest> {
        self.pages
            .iter()
            .map(|(k, v)| (k.as_str(), v.content_hash()))
            .collect()
    }
}

/// Filesystem location of an exported page relative to the export root.
pub fn export_relpath(path: &str) -> PathBuf {
    let trimmed = path.trim_matches('/');
    if trimmed.is_empty() {
        PathBuf::from("index.html")
    } else {
        Path::new(trimmed).join("index.html")
    }
}

/// Writes every page under `dir`; returns the number of files written.
pub fn export(build: &SiteBuild, dir: &Path) -> io::Result<usize> {
    for page in build.pages.values() {
        let file = dir.join(export_relpath(page.path()));
        if let Some(parent) = file.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&file, page.body())?;
    }
    Ok(build.pages.len())
}

/// Reads back the pages `posts` expects from an export directory.
pub fn load_export(dir: &Path, posts: &[Post]) -> io::Result<Vec<RenderedPage>> {
    std::iter::once(INDEX_PATH.to_string())
        .chain(posts.iter().map(post_path))
        .map(|path| {
            let body = fs::read(dir.join(export_relpath(&path)))?;
            Ok(RenderedPage::new(path, body))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{generate_posts, Seed};

    fn anchors(page: &RenderedPage) -> usize {
        String::from_utf8_lossy(page.body()).matches("<a href=\"/posts/").count()
    }

    #[test]
    fn empty_index_is_valid() {
        let page = render_index(&[]);
        let html = String::from_utf8_lossy(page.body());
        assert_eq!(page.path(), "/");
        assert!(html.contains("<title>") && html.contains("<main>") && html.ends_with("</html>\n"));
        assert_eq!(anchors(&page), 0);
    }

    #[test]
    fn index_lists_every_post_in_order() {
        let posts = generate_posts(Seed(42), 100);
        let page = render_index(&posts);
        assert_eq!(anchors(&page), 100);
        let html = String::from_utf8_lossy(page.body());
        let positions: Vec<usize> = posts
            .iter()
            .map(|p| html.find(&format!("href=\"/posts/{}\"", p.slug)).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(page.content_hash(), render_index(&posts).content_hash());
    }

    #[test]
    fn post_page_contains_body_verbatim() {
        let posts = generate_posts(Seed(42), 3);
        let page = render_post(&posts[0]);
        assert_eq!(page.path(), "/posts/post-0");
        let html = String::from_utf8_lossy(page.body());
        assert!(html.contains(&posts[0].body));
        assert!(html.contains(&format!("<title>{}</title>", posts[0].title)));
        assert_eq!(page.content_hash(), Digest::of(page.body()));
        assert_eq!(page.content_hash(), render_post(&posts[0]).content_hash());
    }

    #[test]
    fn markup_in_content_is_escaped() {
        let post = Post {
            id: 0,
            slug: "post-0".into(),
            title: "<script>".into(),
            body: "a & b".into(),
        };
        let html = String::from_utf8_lossy(render_post(&post).body()).into_owned();
        assert!(html.contains("&lt;script&gt;") && html.contains("a &amp; b"));
    }

    #[test]
    fn build_counts_pages() {
        let posts = generate_posts(Seed(42), 100);
        let build = build_site(&posts, DeployId(0));
        assert_eq!(build.pages().len(), 101);
        assert_eq!(build.deploy_id(), DeployId(1));
        assert_eq!(build_site(&[], DeployId(4)).pages().len(), 1);
    }

    #[test]
    fn rebuild_of_unchanged_posts_only_bumps_deploy() {
        let posts = generate_posts(Seed(42), 20);
        let a = build_site(&posts, DeployId(0));
        let b = build_site(&posts, a.deploy_id());
        assert_eq!(a.page_hashes(), b.page_hashes());
        assert_eq!(b.deploy_id(), DeployId(2));

        let (c, rebuilt) = incremental_rebuild(&b, &posts);
        assert!(rebuilt.is_empty());
        assert_eq!(c.page_hashes(), b.page_hashes());
        assert_eq!(c.deploy_id(), DeployId(3));
    }

    #[test]
    fn body_edit_rebuilds_one_page() {
        let posts = generate_posts(Seed(42), 20);
        let prev = build_site(&posts, DeployId(0));
        let mut edited = posts.clone();
        edited[7].body.push_str(" Addendum.");
        let (next, rebuilt) = incremental_rebuild(&prev, &edited);
        assert_eq!(rebuilt, BTreeSet::from(["/posts/post-7".to_string()]));
        assert_eq!(next.page_hashes(), build_site(&edited, DeployId(0)).page_hashes());
    }

    #[test]
    fn title_edit_also_rebuilds_index() {
        let posts = generate_posts(Seed(42), 20);
        let prev = build_site(&posts, DeployId(0));
        let mut edited = posts.clone();
        edited[3].title.push('!');
        let (next, rebuilt) = incremental_rebuild(&prev, &edited);
        assert_eq!(
            rebuilt,
            BTreeSet::from(["/".to_string(), "/posts/post-3".to_string()])
        );
        assert_eq!(next.page_hashes(), build_site(&edited, DeployId(0)).page_hashes());
    }

    #[test]
    fn routes_parse() {
        assert_eq!(Route::parse("/"), Some(Route::Index));
        assert_eq!(Route::parse("/index.html"), Some(Route::Index));
        assert_eq!(Route::parse("/posts/post-4"), Some(Route::Post(4)));
        assert_eq!(Route::parse("/posts/post-4/"), Some(Route::Post(4)));
        assert_eq!(Route::parse("/posts/post-4/index.html"), Some(Route::Post(4)));
        assert_eq!(Route::parse("/posts/"), None);
        assert_eq!(Route::parse("/about"), None);
    }

    #[test]
    fn export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let posts = generate_posts(Seed(9), 5);
        let build = build_site(&posts, DeployId(0));
        assert_eq!(export(&build, dir.path()).unwrap(), 6);
        assert!(dir.path().join("index.html").is_file());
        assert!(dir.path().join("posts/post-2/index.html").is_file());
        let pages = load_export(dir.path(), &posts).unwrap();
        let loaded = SiteBuild::from_parts(build.deploy_id(), &posts, pages).unwrap();
        assert_eq!(loaded.page_hashes(), build.page_hashes());
    }

    #[test]
    fn from_parts_rejects_missing_pages() {
        let posts = generate_posts(Seed(9), 3);
        let build = build_site(&posts, DeployId(0));
        let pages: Vec<_> = build.pages().values().skip(1).cloned().collect();
        assert!(SiteBuild::from_parts(DeployId(1), &posts, pages).is_err());
    }
}
