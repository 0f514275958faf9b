//! Category tree for knowledge entries.
//!
//! On disk the tree is a nested JSON document in which every node is an object
//! holding a `"Children"` object keyed by child label:
//!
//! ```json
//! {"Material Science": {"Children": {"Fluid": {"Children": {}}}}}
//! ```
//!
//! Child order is significant and preserved on load and save.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::KbError;

pub const DEFAULT_ROOT: &str = "Material Science";

/// The sixteen top-level categories of the default tree, in canonical order.
pub const DEFAULT_CATEGORIES: [&str; 16] = [
    "Miscellaneous",
    "Material testing",
    "Fluid",
    "Material characterization",
    "Magnetism",
    "Transport phenomena",
    "Material processing",
    "Electrical",
    "Phase transition",
    "Material Applications",
    "Material manufacturing",
    "Mechanical",
    "Atomic structure",
    "Thermodynamics",
    "Formula",
    "Fundamental_Science_Knowledge",
];

/// Fallback category for records that arrive without one.
pub const FALLBACK_CATEGORY: &str = "Miscellaneous";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryNode {
    pub label: String,
    pub children: Vec<CategoryNode>,
}

impl CategoryNode {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn child(&self, label: &str) -> Option<&CategoryNode> {
        self.children.iter().find(|c| c.label == label)
    }

    fn validate(&self) -> Result<(), KbError> {
        if self.label.trim().is_empty() {
            return Err(KbError::Taxonomy("empty category label".into()));
        }
        if self.label.contains('/') {
            return Err(KbError::Taxonomy(format!(
                "category label `{}` must not contain `/`",
                self.label
            )));
        }
        for (i, child) in self.children.iter().enumerate() {
            if self.children[..i].iter().any(|c| c.label == child.label) {
                return Err(KbError::Taxonomy(format!(
                    "duplicate label `{}` under `{}`",
                    child.label, self.label
                )));
            }
            child.validate()?;
        }
        Ok(())
    }
}

/// A path of labels from the root to some node, e.g. `Material Science/Fluid`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryPath(Vec<String>);

impl CategoryPath {
    pub fn new(labels: Vec<String>) -> Self {
        Self(labels)
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    /// The first label below the root, if any.
    pub fn top_level(&self) -> Option<&str> {
        self.0.get(1).map(String::as_str)
    }
}

impl fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl FromStr for CategoryPath {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self(
            s.split('/')
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
        ))
    }
}

impl Serialize for CategoryPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CategoryPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|e: std::convert::Infallible| match e {}))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    root: CategoryNode,
}

impl Taxonomy {
    pub fn new(root: CategoryNode) -> Result<Self, KbError> {
        root.validate()?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &CategoryNode {
        &self.root
    }

    pub fn root_label(&self) -> &str {
        &self.root.label
    }

    pub fn top_level_labels(&self) -> impl Iterator<Item = &str> {
        self.root.children.iter().map(|c| c.label.as_str())
    }

    /// Anchor `path` at the root (prepending the root label when the path is
    /// relative) and check that it names an existing node strictly below the
    /// root. An empty path resolves to the fallback category.
    pub fn resolve(&self, path: &CategoryPath) -> Result<CategoryPath, KbError> {
        if path.labels().is_empty() {
            return Ok(self.fallback_path());
        }
        let mut labels = path.labels().to_vec();
        if labels.first().map(String::as_str) != Some(self.root.label.as_str()) {
            labels.insert(0, self.root.label.clone());
        }
        if labels.len() < 2 {
            return Err(KbError::UnknownCategory(path.to_string()));
        }
        let mut node = &self.root;
        for label in &labels[1..] {
            node = node
                .child(label)
                .ok_or_else(|| KbError::UnknownCategory(path.to_string()))?;
        }
        Ok(CategoryPath(labels))
    }

    pub fn fallback_path(&self) -> CategoryPath {
        CategoryPath(vec![self.root.label.clone(), FALLBACK_CATEGORY.to_owned()])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, KbError> {
        serde_json::from_str(text).map_err(|e| KbError::Taxonomy(e.to_string()))
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self {
            root: CategoryNode {
                label: DEFAULT_ROOT.to_owned(),
                children: DEFAULT_CATEGORIES.iter().map(|l| CategoryNode::leaf(*l)).collect(),
            },
        }
    }
}

struct ChildrenMap<'a>(&'a [CategoryNode]);
struct NodeBody<'a>(&'a [CategoryNode]);

impl Serialize for ChildrenMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for node in self.0 {
            map.serialize_entry(&node.label, &NodeBody(&node.children))?;
        }
        map.end()
    }
}

impl Serialize for NodeBody<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(1))?;
        map.serialize_entry("Children", &ChildrenMap(self.0))?;
        map.end()
    }
}

impl Serialize for Taxonomy {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ChildrenMap(std::slice::from_ref(&self.root)).serialize(serializer)
    }
}

/// Ordered list of child nodes, rejecting duplicate labels.
struct OrderedChildren(Vec<CategoryNode>);

impl<'de> Deserialize<'de> for OrderedChildren {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ChildrenVisitor;

        impl<'de> Visitor<'de> for ChildrenVisitor {
            type Value = OrderedChildren;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping category labels to nodes")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut nodes: Vec<CategoryNode> = Vec::new();
                while let Some((label, body)) = access.next_entry::<String, ParsedBody>()? {
                    if nodes.iter().any(|n| n.label == label) {
                        return Err(de::Error::custom(format!("duplicate label `{label}`")));
                    }
                    nodes.push(CategoryNode {
                        label,
                        children: body.0,
                    });
                }
                Ok(OrderedChildren(nodes))
            }
        }

        deserializer.deserialize_map(ChildrenVisitor)
    }
}

struct ParsedBody(Vec<CategoryNode>);

impl<'de> Deserialize<'de> for ParsedBody {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BodyVisitor;

        impl<'de> Visitor<'de> for BodyVisitor {
            type Value = ParsedBody;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a node object with an optional `Children` member")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut children = Vec::new();
                while let Some(key) = access.next_key::<String>()? {
                    if key == "Children" {
                        children = access.next_value::<OrderedChildren>()?.0;
                    } else {
                        access.next_value::<de::IgnoredAny>()?;
                    }
                }
                Ok(ParsedBody(children))
            }
        }

        deserializer.deserialize_map(BodyVisitor)
    }
}

impl<'de> Deserialize<'de> for Taxonomy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut top = OrderedChildren::deserialize(deserializer)?.0;
        if top.len() != 1 {
            return Err(de::Error::custom(format!(
                "taxonomy must have exactly one root, found {}",
                top.len()
            )));
        }
        Taxonomy::new(top.remove(0)).map_err(de::Error::custom)
    }
}
