//! Block segmentation of HTML pages.
//!
//! A page is parsed with a conforming HTML5 tree builder and then reduced to
//! a tree of *blocks*: the elements whose tag belongs to the configured
//! block-tag set. All other elements are transparent; their text and their
//! block descendants are lifted into the nearest block ancestor. The root of
//! every tree is the `html` element.

use std::borrow::Borrow;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use scraper::{Html, Node};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decode::decode_page;
use crate::error::{Error, Result};

/// Index of a node inside its [`BlockTree`]. Equal to the node's `doc_order`.
pub type NodeId = usize;

pub const ROOT_TAG: &str = "html";

/// Tags that are block boundaries unless configured otherwise.
pub const DEFAULT_BLOCK_TAGS: &[&str] = &[
    "article", "body", "div", "footer", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "li",
    "nav", "ol", "p", "section", "span", "table", "td", "tr", "ul",
];

/// Elements whose text never reaches `direct_text`.
const SKIPPED_ELEMENTS: &[&str] = &["style", "title", "noscript", "template", "textarea"];

/// Non-block elements that do not break words when adjacent to text.
const INLINE_ELEMENTS: &[&str] = &[
    "a", "abbr", "b", "bdi", "bdo", "big", "cite", "code", "data", "dfn", "em", "font", "i", "img",
    "kbd", "label", "mark", "nobr", "q", "s", "samp", "small", "span", "strike", "strong", "sub",
    "sup", "time", "tt", "u", "var", "wbr",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Lowercase tag names treated as block boundaries.
    pub block_tags: BTreeSet<String>,
    /// Keep atomic blocks that carry neither text nor structural markers
    /// (e.g. `<hr>` separators).
    #[serde(default)]
    pub keep_empty_blocks: bool,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            block_tags: DEFAULT_BLOCK_TAGS.iter().map(|t| t.to_string()).collect(),
            keep_empty_blocks: false,
        }
    }
}

impl SegmentationConfig {
    pub fn with_tags<I, T>(tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let cfg = Self {
            block_tags: tags.into_iter().map(Into::into).collect(),
            keep_empty_blocks: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_tags.is_empty() {
            return Err(Error::InvalidConfig("block tag set is empty".into()));
        }
        for tag in &self.block_tags {
            BlockTag::new(tag)?;
            if tag == ROOT_TAG {
                return Err(Error::InvalidConfig(
                    "`html` is always the root and cannot be listed as a block tag".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_block(&self, tag: &str) -> bool {
        self.block_tags.contains(tag)
    }
}

/// Lowercase tag name of a block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockTag(String);

impl BlockTag {
    pub fn new(name: &str) -> Result<Self> {
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
        if !valid {
            return Err(Error::InvalidConfig(format!(
                "block tag `{name}` must be a lowercase tag name"
            )));
        }
        Ok(Self(name.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BlockTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Counts of non-text markers owned by a block (not by its block descendants).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StructuralCounts {
    pub images: u32,
    pub scripts: u32,
    pub anchors: u32,
}

impl StructuralCounts {
    pub fn is_zero(&self) -> bool {
        self.images == 0 && self.scripts == 0 && self.anchors == 0
    }
}

impl std::ops::AddAssign for StructuralCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.images += rhs.images;
        self.scripts += rhs.scripts;
        self.anchors += rhs.anchors;
    }
}

/// A piece of a block's content, in source order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    /// Whitespace-normalized text run between sub-blocks.
    Text(String),
    Child(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockNode {
    pub tag: BlockTag,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Text runs and sub-blocks interleaved as they appear in the page.
    pub segments: Vec<Segment>,
    /// Text owned by this block alone: its text runs joined by single spaces.
    pub direct_text: String,
    pub counts: StructuralCounts,
    pub doc_order: usize,
    pub depth: usize,
}

impl BlockNode {
    fn new(tag: BlockTag, parent: Option<NodeId>, doc_order: usize, depth: usize) -> Self {
        Self {
            tag,
            parent,
            children: Vec::new(),
            segments: Vec::new(),
            direct_text: String::new(),
            counts: StructuralCounts::default(),
            doc_order,
            depth,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Block hierarchy of one page, stored as an arena in document (pre-)order.
#[derive(Clone, Debug)]
pub struct BlockTree {
    page_id: String,
    nodes: Vec<BlockNode>,
    config: Arc<SegmentationConfig>,
}

impl PartialEq for BlockTree {
    fn eq(&self, other: &Self) -> bool {
        self.page_id == other.page_id && self.nodes == other.nodes && *self.config == *other.config
    }
}

impl BlockTree {
    pub fn page_id(&self) -> &str {
        &self.page_id
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.config
    }

    pub fn root(&self) -> &BlockNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> Result<&BlockNode> {
        self.nodes.get(id).ok_or_else(|| Error::NodeNotInTree {
            node: id,
            page_id: self.page_id.clone(),
            len: self.nodes.len(),
        })
    }

    pub fn nodes(&self) -> &[BlockNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1 && self.nodes[0].segments.is_empty()
    }

    /// Traversal path of `id`, e.g. `HTML.BODY.TABLE.TR.P`.
    pub fn path(&self, id: NodeId) -> Result<TraversalPath> {
        let mut node = self.node(id)?;
        let mut tags = vec![node.tag.as_str()];
        while let Some(parent) = node.parent {
            node = &self.nodes[parent];
            tags.push(node.tag.as_str());
        }
        tags.reverse();
        Ok(TraversalPath::from_tags(tags))
    }

    /// Paths of every node, indexed by [`NodeId`].
    pub fn paths(&self) -> Vec<TraversalPath> {
        let mut out: Vec<TraversalPath> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let path = match node.parent {
                None => TraversalPath::root(),
                Some(p) => out[p].child(&node.tag),
            };
            out.push(path);
        }
        out
    }

    /// Every text run of the subtree rooted at `id`, in source order.
    pub fn subtree_text(&self, id: NodeId) -> Result<String> {
        self.node(id)?;
        let mut pieces = Vec::new();
        self.collect_text(id, &mut pieces);
        Ok(pieces.join(" "))
    }

    /// Visible block text of the whole page in source order.
    pub fn full_text(&self) -> String {
        let mut pieces = Vec::new();
        self.collect_text(0, &mut pieces);
        pieces.join(" ")
    }

    fn collect_text<'a>(&'a self, id: NodeId, out: &mut Vec<&'a str>) {
        for seg in &self.nodes[id].segments {
            match seg {
                Segment::Text(t) => out.push(t),
                Segment::Child(c) => self.collect_text(*c, out),
            }
        }
    }

    /// Node ids of the subtree rooted at `id` (inclusive), in document order.
    pub fn descendants(&self, id: NodeId) -> std::ops::Range<NodeId> {
        // Preorder numbering makes every subtree a contiguous id range.
        let mut end = id + 1;
        while end < self.nodes.len() && self.is_ancestor(id, end) {
            end += 1;
        }
        id..end
    }

    fn is_ancestor(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        while let Some(p) = self.nodes[node].parent {
            if p == ancestor {
                return true;
            }
            if p < ancestor {
                return false;
            }
            node = p;
        }
        false
    }
}

/// Dot-joined uppercase tag sequence from the root to a block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraversalPath(String);

impl TraversalPath {
    pub fn root() -> Self {
        Self(ROOT_TAG.to_ascii_uppercase())
    }

    fn from_tags<'a>(tags: impl IntoIterator<Item = &'a str>) -> Self {
        let rendered: Vec<String> = tags.into_iter().map(str::to_ascii_uppercase).collect();
        Self(rendered.join("."))
    }

    pub fn child(&self, tag: &BlockTag) -> Self {
        let mut s = String::with_capacity(self.0.len() + tag.0.len() + 1);
        s.push_str(&self.0);
        s.push('.');
        s.push_str(&tag.0.to_ascii_uppercase());
        Self(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    pub fn len(&self) -> usize {
        self.tags().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl FromStr for TraversalPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tags = s.split('.');
        let valid = tags.next() == Some("HTML")
            && tags.all(|t| {
                !t.is_empty()
                    && t.chars()
                        .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-')
            });
        if valid {
            Ok(Self(s.to_string()))
        } else {
            Err(Error::InvalidPath(s.to_string()))
        }
    }
}

impl fmt::Display for TraversalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for TraversalPath {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl Serialize for TraversalPath {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for TraversalPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomicKind {
    /// A block without sub-blocks.
    Leaf,
    /// What remains of a block once its sub-blocks are cut out.
    Residual,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomicBlock {
    pub source: NodeId,
    pub path: TraversalPath,
    pub text: String,
    pub kind: AtomicKind,
    pub doc_order: usize,
    pub counts: StructuralCounts,
}

/// Parses raw page bytes into a block tree.
pub fn build_block_tree(
    page_id: impl Into<String>,
    html: &[u8],
    config: Arc<SegmentationConfig>,
) -> Result<BlockTree> {
    let text = decode_page(html)?;
    Ok(build_block_tree_from_str(page_id, &text, config))
}

pub fn build_block_tree_from_str(
    page_id: impl Into<String>,
    html: &str,
    config: Arc<SegmentationConfig>,
) -> BlockTree {
    let page_id = page_id.into();
    let root = BlockNode::new(BlockTag(ROOT_TAG.to_string()), None, 0, 0);
    if html.trim().is_empty() {
        return BlockTree {
            page_id,
            nodes: vec![root],
            config,
        };
    }
    let document = Html::parse_document(html);
    let mut builder = TreeBuilder {
        config: &config,
        nodes: vec![root],
        pending: vec![String::new()],
    };
    builder.visit(document.tree.root(), 0);
    builder.close(0);
    let mut nodes = builder.nodes;
    let degenerate = nodes
        .iter()
        .all(|n| n.direct_text.is_empty() && n.counts.is_zero());
    if degenerate {
        nodes.truncate(1);
        nodes[0].children.clear();
        nodes[0].segments.clear();
    }
    BlockTree {
        page_id,
        nodes,
        config,
    }
}

struct TreeBuilder<'c> {
    config: &'c SegmentationConfig,
    nodes: Vec<BlockNode>,
    /// Raw text accumulated for each node since its last segment boundary.
    pending: Vec<String>,
}

impl TreeBuilder<'_> {
    fn visit(&mut self, dom: ego_tree::NodeRef<'_, Node>, owner: NodeId) {
        for child in dom.children() {
            match child.value() {
                Node::Text(text) => self.pending[owner].push_str(text),
                Node::Element(element) => {
                    let name = element.name();
                    if name == "script" {
                        self.nodes[owner].counts.scripts += 1;
                        continue;
                    }
                    if SKIPPED_ELEMENTS.contains(&name) {
                        continue;
                    }
                    if name == "img" {
                        self.nodes[owner].counts.images += 1;
                    } else if name == "a" {
                        self.nodes[owner].counts.anchors += 1;
                    }
                    if name != ROOT_TAG && self.config.is_block(name) {
                        let id = self.open(name, owner);
                        self.visit(child, id);
                        self.close(id);
                    } else if INLINE_ELEMENTS.contains(&name) || name == ROOT_TAG {
                        self.visit(child, owner);
                    } else {
                        self.pending[owner].push(' ');
                        self.visit(child, owner);
                        self.pending[owner].push(' ');
                    }
                }
                _ => {}
            }
        }
    }

    fn open(&mut self, name: &str, owner: NodeId) -> NodeId {
        self.flush(owner);
        let id = self.nodes.len();
        let depth = self.nodes[owner].depth + 1;
        let tag = BlockTag(name.to_string());
        self.nodes.push(BlockNode::new(tag, Some(owner), id, depth));
        self.pending.push(String::new());
        let parent = &mut self.nodes[owner];
        parent.children.push(id);
        parent.segments.push(Segment::Child(id));
        id
    }

    fn close(&mut self, id: NodeId) {
        self.flush(id);
        let node = &mut self.nodes[id];
        let texts: Vec<&str> = node
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Text(t) => Some(t.as_str()),
                Segment::Child(_) => None,
            })
            .collect();
        node.direct_text = texts.join(" ");
    }

    fn flush(&mut self, id: NodeId) {
        let raw = std::mem::take(&mut self.pending[id]);
        let normalized = normalize_whitespace(&raw);
        if !normalized.is_empty() {
            self.nodes[id].segments.push(Segment::Text(normalized));
        }
    }
}

/// Collapses whitespace runs to single spaces and trims.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Path of `node` within `tree`.
pub fn traversal_path(node: NodeId, tree: &BlockTree) -> Result<TraversalPath> {
    tree.path(node)
}

/// Splits a tree into atomic blocks.
///
/// Each childless node becomes a leaf block; each node with sub-blocks
/// contributes its descendants' blocks followed by a residual block holding
/// its own direct text. Blocks without text or structural markers are dropped
/// unless `keep_empty_blocks` is set.
pub fn atomic_partition(tree: &BlockTree) -> Vec<AtomicBlock> {
    let paths = tree.paths();
    let keep_empty = tree.config.keep_empty_blocks;
    let mut out = Vec::new();
    // Iterative post-order walk: (node, children already expanded).
    let mut stack = vec![(0usize, false)];
    while let Some((id, expanded)) = stack.pop() {
        let node = &tree.nodes[id];
        if !expanded && !node.children.is_empty() {
            stack.push((id, true));
            stack.extend(node.children.iter().rev().map(|&c| (c, false)));
            continue;
        }
        if node.direct_text.is_empty() && node.counts.is_zero() && !keep_empty {
            continue;
        }
        out.push(AtomicBlock {
            source: id,
            path: paths[id].clone(),
            text: node.direct_text.clone(),
            kind: if node.children.is_empty() {
                AtomicKind::Leaf
            } else {
                AtomicKind::Residual
            },
            doc_order: node.doc_order,
            counts: node.counts,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(html: &str) -> BlockTree {
        build_block_tree_from_str("t", html, Arc::new(SegmentationConfig::default()))
    }

    #[test]
    fn empty_page_is_a_bare_root() {
        for html in [
            "",
            "   \n",
            "<!-- nothing -->",
            "<html><body></body></html>",
        ] {
            let t = tree(html);
            assert_eq!(t.len(), 1, "{html:?}");
            assert_eq!(t.root().tag.as_str(), "html");
            assert!(t.root().children.is_empty());
            assert_eq!(t.root().direct_text, "");
            assert!(t.is_empty());
        }
    }

    #[test]
    fn non_block_elements_are_transparent() {
        let t = tree("<div>Hello <b>bold</b> and <a href='#'>link</a><img src=x><em>!</em></div>");
        let div = t.node(2).unwrap();
        assert_eq!(div.tag.as_str(), "div");
        assert_eq!(div.direct_text, "Hello bold and link!");
        assert_eq!(div.counts.anchors, 1);
        assert_eq!(div.counts.images, 1);
    }

    #[test]
    fn script_style_comments_are_excluded_but_scripts_counted() {
        let t = tree("<head><title>T</title><style>p{}</style></head><body><p>a<script>var x=1;</script><!-- c -->b</p></body>");
        let p = t.nodes().iter().find(|n| n.tag.as_str() == "p").unwrap();
        assert_eq!(p.direct_text, "ab");
        assert_eq!(p.counts.scripts, 1);
        assert!(!t.full_text().contains('T'));
    }

    #[test]
    fn structural_markers_belong_to_the_nearest_block() {
        let t = tree("<div><a href=x><img src=y></a><p><a href=z>t</a></p></div>");
        let div = &t.nodes()[2];
        let p = &t.nodes()[3];
        assert_eq!((div.counts.anchors, div.counts.images), (1, 1));
        assert_eq!((p.counts.anchors, p.counts.images), (1, 0));
    }

    #[test]
    fn table_path_without_td_blocks() {
        let cfg = SegmentationConfig::with_tags(["body", "table", "tr", "p"]).unwrap();
        let t = build_block_tree_from_str(
            "t",
            "<table><tr><td><p>cell text</p></td></tr></table>",
            Arc::new(cfg),
        );
        let p = t
            .nodes()
            .iter()
            .position(|n| n.tag.as_str() == "p")
            .unwrap();
        assert_eq!(
            traversal_path(p, &t).unwrap().as_str(),
            "HTML.BODY.TABLE.TR.P"
        );
        assert_eq!(traversal_path(0, &t).unwrap().as_str(), "HTML");
        assert!(matches!(
            traversal_path(99, &t),
            Err(Error::NodeNotInTree { node: 99, .. })
        ));
    }

    #[test]
    fn default_tags_put_td_between_tr_and_p() {
        let t = tree("<table><tr><td><p>x</p></td></tr></table>");
        let p = t
            .nodes()
            .iter()
            .position(|n| n.tag.as_str() == "p")
            .unwrap();
        assert_eq!(t.path(p).unwrap().as_str(), "HTML.BODY.TABLE.TR.TD.P");
    }

    #[test]
    fn nested_divs_with_text_only_at_p_yield_one_block() {
        let t = tree("<div><div><p>only here</p></div></div>");
        let blocks = atomic_partition(&t);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].kind, AtomicKind::Leaf);
        assert_eq!(blocks[0].text, "only here");
        assert_eq!(blocks[0].path.as_str(), "HTML.BODY.DIV.DIV.P");
    }

    #[test]
    fn residual_follows_children() {
        let t = tree("<p>before <span>inner</span> after</p>");
        let blocks = atomic_partition(&t);
        let texts: Vec<_> = blocks.iter().map(|b| (b.text.as_str(), b.kind)).collect();
        assert_eq!(
            texts,
            [
                ("inner", AtomicKind::Leaf),
                ("before after", AtomicKind::Residual)
            ]
        );
    }

    #[test]
    fn hr_blocks_are_dropped_unless_kept() {
        let html = "<p>a</p><hr><p>b</p>";
        assert_eq!(atomic_partition(&tree(html)).len(), 2);
        let cfg = SegmentationConfig {
            keep_empty_blocks: true,
            ..Default::default()
        };
        let t = build_block_tree_from_str("t", html, Arc::new(cfg));
        let blocks = atomic_partition(&t);
        // body residual is empty too, so it is kept alongside the hr.
        assert!(blocks.iter().any(|b| b.path.as_str() == "HTML.BODY.HR"));
    }

    #[test]
    fn image_only_leaf_survives() {
        let t = tree("<div><img src=a><img src=b></div><p>x</p>");
        let blocks = atomic_partition(&t);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].counts.images, 2);
        assert_eq!(blocks[0].text, "");
    }

    #[test]
    fn descendants_are_contiguous() {
        let t = tree("<div><p>a<span>b</span></p><p>c</p></div><p>d</p>");
        // html(0) body(1) div(2) p(3) span(4) p(5) p(6)
        assert_eq!(t.descendants(2), 2..6);
        assert_eq!(t.descendants(3), 3..5);
        assert_eq!(t.descendants(6), 6..7);
        assert_eq!(t.descendants(0), 0..7);
    }

    #[test]
    fn path_parse_roundtrip_and_rejects_garbage() {
        for s in ["HTML", "HTML.BODY.TABLE.TR.P", "HTML.BODY.H1", "HTML.X-Y"] {
            let p: TraversalPath = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        for s in ["", "BODY.P", "HTML..P", "HTML.p", "HTML.P.", "html"] {
            assert!(s.parse::<TraversalPath>().is_err(), "{s}");
        }
        assert_eq!(
            TraversalPath::root()
                .child(&BlockTag::new("tr").unwrap())
                .len(),
            2
        );
    }

    #[test]
    fn config_validation() {
        assert!(SegmentationConfig::with_tags(Vec::<String>::new()).is_err());
        assert!(SegmentationConfig::with_tags(["P"]).is_err());
        assert!(SegmentationConfig::with_tags(["a.b"]).is_err());
        assert!(SegmentationConfig::with_tags(["html"]).is_err());
        assert!(SegmentationConfig::default().validate().is_ok());
    }
}
