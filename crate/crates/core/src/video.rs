//! Frame sequences with optional per-object ground truth.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::metrics::ObjectGt;
use crate::model::{Frame, ObjectId};

#[derive(Debug, Clone)]
pub struct VideoSequence {
    pub name: String,
    pub frames: Vec<Frame>,
    /// Per object, one entry per frame; `None` marks an unannotated frame.
    pub gt: BTreeMap<ObjectId, Vec<Option<BinaryMask>>>,
}

impl VideoSequence {
    pub fn new(name: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("a sequence needs at least one frame"));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        for (i, f) in frames.iter().enumerate() {
            if f.index() != i {
                return Err(Error::invalid(format!("frame {i} carries index {}", f.index())));
            }
            if f.width() != w || f.height() != h {
                return Err(Error::invalid("all frames of a sequence must share one size"));
            }
        }
        Ok(Self {
            name: name.into(),
            frames,
            gt: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width()
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height()
    }

    /// First frame where the object's ground truth is non-empty.
    pub fn first_appearance(&self, object: ObjectId) -> Option<usize> {
        self.gt
            .get(&object)?
            .iter()
            .position(|m| m.as_ref().is_some_and(|m| !m.is_empty()))
    }

    /// First-appearance frame and mask of every object that appears at all.
    pub fn seeds(&self) -> BTreeMap<ObjectId, (usize, BinaryMask)> {
        self.gt
            .keys()
            .filter_map(|&id| {
                let t = self.first_appearance(id)?;
                let m = self.gt[&id][t].clone()?;
                Some((id, (t, m)))
            })
            .collect()
    }

    /// Ground truth in the shape the metrics expect, for objects that appear.
    pub fn metrics_gt(&self) -> BTreeMap<ObjectId, ObjectGt> {
        self.gt
            .iter()
            .filter_map(|(&id, masks)| {
                let first = self.first_appearance(id)?;
                Some((
                    id,
                    ObjectGt {
                        first_frame: first,
                        masks: masks.clone(),
                    },
                ))
            })
            .collect()
    }
}
