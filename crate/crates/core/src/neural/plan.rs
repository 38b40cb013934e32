use serde::{Deserialize, Serialize};

use super::NeuralError;

/// One trajectory segment: states `s_{offset+1} ..= s_{offset+len}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub index: usize,
    pub offset: usize,
    pub len: usize,
}

/// Division of a `K`-step horizon into consecutive segments.
///
/// `start_segment` restricts every downstream stage to the segments with index
/// `≥ start_segment`; the leading segments still count toward offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    horizon: usize,
    lengths: Vec<usize>,
    #[serde(default)]
    start_segment: usize,
}

impl SegmentPlan {
    pub fn new(horizon: usize, lengths: Vec<usize>) -> Result<Self, NeuralError> {
        let plan = Self {
            horizon,
            lengths,
            start_segment: 0,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `K` segments of one step each.
    pub fn unit(horizon: usize) -> Result<Self, NeuralError> {
        Self::new(horizon, vec![1; horizon])
    }

    /// Equal segments of `len` steps; the last one absorbs any remainder.
    pub fn uniform(horizon: usize, len: usize) -> Result<Self, NeuralError> {
        if len == 0 || len > horizon {
            return Err(NeuralError::InvalidPlan(format!(
                "segment length {len} incompatible with horizon {horizon}"
            )));
        }
        let n = horizon / len;
        let mut lengths = vec![len; n];
        *lengths.last_mut().unwrap() += horizon - n * len;
        Self::new(horizon, lengths)
    }

    /// Keeps only segments whose first state index (1-based) is `≥ step`.
    pub fn with_start_step(mut self, step: usize) -> Result<Self, NeuralError> {
        let first = self
            .all_segments()
            .find(|s| s.offset + 1 >= step)
            .ok_or_else(|| {
                NeuralError::InvalidPlan(format!("start step {step} beyond horizon {}", self.horizon))
            })?;
        self.start_segment = first.index;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.horizon == 0 {
            return Err(NeuralError::InvalidPlan("horizon must be ≥ 1".into()));
        }
        if self.lengths.contains(&0) {
            return Err(NeuralError::InvalidPlan("segment lengths must be ≥ 1".into()));
        }
        let total: usize = self.lengths.iter().sum();
        if total != self.horizon {
            return Err(NeuralError::InvalidPlan(format!(
                "segment lengths sum to {total}, horizon is {}",
                self.horizon
            )));
        }
        if self.start_segment >= self.lengths.len() {
            return Err(NeuralError::InvalidPlan("start segment out of range".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn num_segments(&self) -> usize {
        self.lengths.len()
    }

    pub fn start_segment(&self) -> usize {
        self.start_segment
    }

    /// Offset `t_q = Σ_{ℓ<q} T_ℓ`.
    pub fn offset(&self, q: usize) -> usize {
        self.lengths[..q].iter().sum()
    }

    pub fn segment(&self, q: usize) -> Result<Segment, NeuralError> {
        if q >= self.lengths.len() {
            return Err(NeuralError::SegmentOutOfRange {
                index: q,
                count: self.lengths.len(),
            });
        }
        Ok(Segment {
            index: q,
            offset: self.offset(q),
            len: self.lengths[q],
        })
    }

    fn all_segments(&self) -> impl Iterator<Item = Segment> + '_ {
        let mut offset = 0;
        self.lengths.iter().enumerate().map(move |(index, &len)| {
            let s = Segment { index, offset, len };
            offset += len;
            s
        })
    }

    /// Active segments, ascending.
    pub fn segments(&self) -> Vec<Segment> {
        self.all_segments().skip(self.start_segment).collect()
    }

    /// Total steps covered by the active segments.
    pub fn active_steps(&self) -> usize {
        self.segments().iter().map(|s| s.len).sum()
    }
}
