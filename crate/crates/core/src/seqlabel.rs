//! Per-token BIO tagging baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::{Document, FieldSchema, Span};
use crate::error::{Error, Result};
use crate::eval::Entity;
use crate::numerics::{Graph, ParamId, ParamStore, Var};

/// `O` followed by `B-f`, `I-f` for every field, in schema order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    fields: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

impl TagSet {
    pub fn new(fields: Vec<String>) -> Self {
        TagSet { fields }
    }

    pub fn from_schema(schema: &FieldSchema) -> Self {
        Self::new(schema.field_ids.clone())
    }

    pub fn len(&self) -> usize {
        2 * self.fields.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn field_index(&self, field_id: &str) -> Option<usize> {
        self.fields.iter().position(|f| f == field_id)
    }

    pub fn index(&self, tag: Tag) -> usize {
        match tag {
            Tag::Outside => 0,
            Tag::Begin(f) => 1 + 2 * f,
            Tag::Inside(f) => 2 + 2 * f,
        }
    }

    pub fn tag(&self, index: usize) -> Option<Tag> {
        match index {
            0 => Some(Tag::Outside),
            i if i < self.len() => Some(if i % 2 == 1 {
                Tag::Begin((i - 1) / 2)
            } else {
                Tag::Inside((i - 2) / 2)
            }),
            _ => None,
        }
    }

    pub fn label(&self, index: usize) -> String {
        match self.tag(index) {
            Some(Tag::Outside) => "O".into(),
            Some(Tag::Begin(f)) => format!("B-{}", self.fields[f]),
            Some(Tag::Inside(f)) => format!("I-{}", self.fields[f]),
            None => "?".into(),
        }
    }

    /// Gold tag per position, null token included (tagged `O`). Annotations
    /// of fields outside the tag set are an error.
    pub fn encode(&self, doc: &Document) -> Result<Vec<usize>> {
        let mut tags = vec![0; doc.seq_len()];
        for ann in &doc.annotations {
            let f = self
                .field_index(&ann.field_id)
                .ok_or_else(|| Error::UnknownField(ann.field_id.clone()))?;
            for s in &ann.spans {
                tags[s.start] = self.index(Tag::Begin(f));
                for t in &mut tags[s.start + 1..=s.end] {
                    *t = self.index(Tag::Inside(f));
                }
            }
        }
        Ok(tags)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TagHeadParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl TagHeadParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        hidden: usize,
        tags: &TagSet,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        store.add_normal("tag_head/weight", &[hidden, tags.len()], std, rng)?;
        store.add("tag_head/bias", crate::numerics::Tensor::zeros(&[tags.len()]))?;
        Self::bind(store, hidden, tags)
    }

    pub fn bind(store: &ParamStore, hidden: usize, tags: &TagSet) -> Result<Self> {
        let get = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if store.get(id).shape() != shape {
                return Err(Error::Checkpoint(format!("`{name}` has shape {:?}", store.get(id).shape())));
            }
            Ok(id)
        };
        Ok(TagHeadParams {
            weight: get("tag_head/weight", &[hidden, tags.len()])?,
            bias: get("tag_head/bias", &[tags.len()])?,
        })
    }
}

/// Per-position tag logits `[L×|tags|]`.
pub fn tag_forward(g: &mut Graph<'_>, hidden: Var, params: &TagHeadParams) -> Result<Var> {
    let (w, b) = (g.param(params.weight), g.param(params.bias));
    let logits = g.matmul(hidden, w)?;
    g.add_row(logits, b)
}

/// Mean token cross entropy over positions with `mask[i]`.
pub fn tag_loss(g: &mut Graph<'_>, logits: Var, gold: &[usize], mask: &[bool]) -> Result<Var> {
    if !mask.iter().any(|&m| m) {
        log::warn!("tag loss over a fully masked sequence is defined as 0");
    }
    g.cross_entropy_rows(logits, gold, mask)
}

/// Loss mask for tagging: real tokens only, never the null token.
pub fn tag_mask(attention_mask: &[bool]) -> Vec<bool> {
    attention_mask
        .iter()
        .enumerate()
        .map(|(i, &m)| i > 0 && m)
        .collect()
}

/// Turns BIO tags of the real tokens (position 1 first) into entities with
/// 1-based inclusive spans. In lenient mode an `I-f` that does not continue
/// an `f` entity opens a new one; in strict mode it is ignored.
pub fn bio_decode(tags: &[usize], tagset: &TagSet, strict: bool) -> Vec<Entity> {
    let mut out: Vec<Entity> = Vec::new();
    let mut open: Option<(usize, usize)> = None; // (field, start)
    let close = |open: &mut Option<(usize, usize)>, end: usize, out: &mut Vec<Entity>| {
        if let Some((f, start)) = open.take() {
            out.push(Entity::new(tagset.fields()[f].clone(), Span::new(start, end)));
        }
    };
    for (i, &t) in tags.iter().enumerate() {
        let pos = i + 1;
        match tagset.tag(t).unwrap_or(Tag::Outside) {
            Tag::Outside => close(&mut open, pos - 1, &mut out),
            Tag::Begin(f) => {
                close(&mut open, pos - 1, &mut out);
                open = Some((f, pos));
            }
            Tag::Inside(f) => match open {
                Some((g, _)) if g == f => {}
                _ => {
                    close(&mut open, pos - 1, &mut out);
                    if !strict {
                        open = Some((f, pos));
                    }
                }
            },
        }
    }
    close(&mut open, tags.len(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts() -> TagSet {
        TagSet::new(vec!["a".into(), "b".into()])
    }

    #[test]
    fn layout_of_tags() {
        let t = ts();
        assert_eq!(t.len(), 5);
        assert_eq!(t.label(0), "O");
        assert_eq!(t.label(1), "B-a");
        assert_eq!(t.label(4), "I-b");
    }

    #[test]
    fn decode_examples() {
        let t = ts();
        let (ba, ia, o, bb) = (1, 2, 0, 3);
        assert_eq!(
            bio_decode(&[ba, ia, o, bb], &t, false),
            vec![Entity::new("a", Span::new(1, 2)), Entity::new("b", Span::new(4, 4))]
        );
        assert!(bio_decode(&[0, 0, 0], &t, false).is_empty());
        assert_eq!(bio_decode(&[ia, ia], &t, false), vec![Entity::new("a", Span::new(1, 2))]);
        assert!(bio_decode(&[ia, ia], &t, true).is_empty());
        // I of another field breaks the run
        assert_eq!(
            bio_decode(&[ba, 4], &t, false),
            vec![Entity::new("a", Span::new(1, 1)), Entity::new("b", Span::new(2, 2))]
        );
    }

    #[test]
    fn uniform_tag_loss_is_ln_tagset() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let logits = g.input(crate::numerics::Tensor::zeros(&[4, 5]));
        let l = tag_loss(&mut g, logits, &[0, 1, 2, 3], &[false, true, true, true]).unwrap();
        assert!((g.value(l).item() - 5f64.ln()).abs() < 1e-12);
    }
}
