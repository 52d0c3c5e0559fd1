use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Detector stage a parameter block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Backbone,
    Neck,
    Head,
}

/// Layer widths of the staged detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Region feature length.
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub classes: usize,
    /// Width of the region and class embeddings.
    pub embed: usize,
}

impl ModelDims {
    pub fn new(input: usize, hidden1: usize, hidden2: usize, classes: usize, embed: usize) -> Self {
        Self {
            input,
            hidden1,
            hidden2,
            classes,
            embed,
        }
    }

    /// 16x16 features, 64 and 32 hidden units, 32-wide embeddings.
    pub fn with_classes(classes: usize) -> Self {
        Self::new(256, 64, 32, classes, 32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(x) + &self.bias
    }
}

/// Parameters of backbone, neck and head. Also used to hold gradients and
/// optimizer moments, which share the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedParams {
    pub dims: ModelDims,
    /// `input -> hidden1`, tanh.
    pub backbone: Affine,
    /// `hidden1 -> hidden2`, tanh.
    pub neck: Affine,
    /// `hidden2 -> 4`, sigmoid, read as `(cx, cy, w, h)`.
    pub box_head: Affine,
    /// `hidden2 -> classes` logits.
    pub class_head: Affine,
    /// `embed x hidden2` projection of the neck output.
    pub embed: Array2<f64>,
    /// `classes x embed` class embedding table.
    pub class_embeddings: Array2<f64>,
}

/// Named view of one parameter block.
pub struct Block<'a> {
    pub name: &'static str,
    pub stage: Stage,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

pub struct BlockMut<'a> {
    pub name: &'static str,
    pub stage: Stage,
    pub data: &'a mut [f64],
}

pub const BLOCK_NAMES: [&str; 10] = [
    "backbone.weight",
    "backbone.bias",
    "neck.weight",
    "neck.bias",
    "head.box.weight",
    "head.box.bias",
    "head.class.weight",
    "head.class.bias",
    "head.embed.weight",
    "head.class_embeddings",
];

fn stage_of(index: usize) -> Stage {
    match index {
        0 | 1 => Stage::Backbone,
        2 | 3 => Stage::Neck,
        _ => Stage::Head,
    }
}

impl StagedParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            backbone: Affine::zeros(dims.input, dims.hidden1),
            neck: Affine::zeros(dims.hidden1, dims.hidden2),
            box_head: Affine::zeros(dims.hidden2, 4),
            class_head: Affine::zeros(dims.hidden2, dims.classes),
            embed: Array2::zeros((dims.embed, dims.hidden2)),
            class_embeddings: Array2::zeros((dims.classes, dims.embed)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Uniform fan-in scaled weights, zero biases, unit-scale class embeddings.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let fill = |a: &mut Array2<f64>, fan_in: usize, rng: &mut R| {
            let bound = (3.0 / fan_in as f64).sqrt();
            a.mapv_inplace(|_| rng.gen_range(-bound..bound));
        };
        fill(&mut p.backbone.weight, dims.input, rng);
        fill(&mut p.neck.weight, dims.hidden1, rng);
        fill(&mut p.box_head.weight, dims.hidden2, rng);
        fill(&mut p.class_head.weight, dims.hidden2, rng);
        fill(&mut p.embed, dims.hidden2, rng);
        fill(&mut p.class_embeddings, 1, rng);
        p
    }

    fn shapes(&self) -> [(usize, usize); 10] {
        let d = self.dims;
        [
            (d.hidden1, d.input),
            (d.hidden1, 1),
            (d.hidden2, d.hidden1),
            (d.hidden2, 1),
            (4, d.hidden2),
            (4, 1),
            (d.classes, d.hidden2),
            (d.classes, 1),
            (d.embed, d.hidden2),
            (d.classes, d.embed),
        ]
    }

    pub fn blocks(&self) -> Vec<Block<'_>> {
        let data: [&[f64]; 10] = [
            self.backbone.weight.as_slice().expect("standard layout"),
            self.backbone.bias.as_slice().expect("standard layout"),
            self.neck.weight.as_slice().expect("standard layout"),
            self.neck.bias.as_slice().expect("standard layout"),
            self.box_head.weight.as_slice().expect("standard layout"),
            self.box_head.bias.as_slice().expect("standard layout"),
            self.class_head.weight.as_slice().expect("standard layout"),
            self.class_head.bias.as_slice().expect("standard layout"),
            self.embed.as_slice().expect("standard layout"),
            self.class_embeddings.as_slice().expect("standard layout"),
        ];
        let shapes = self.shapes();
        data.into_iter()
            .enumerate()
            .map(|(i, data)| Block {
                name: BLOCK_NAMES[i],
                stage: stage_of(i),
                shape: shapes[i],
                data,
            })
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let data: [&mut [f64]; 10] = [
            self.backbone
                .weight
                .as_slice_mut()
                .expect("standard layout"),
            self.backbone.bias.as_slice_mut().expect("standard layout"),
            self.neck.weight.as_slice_mut().expect("standard layout"),
            self.neck.bias.as_slice_mut().expect("standard layout"),
            self.box_head
                .weight
                .as_slice_mut()
                .expect("standard layout"),
            self.box_head.bias.as_slice_mut().expect("standard layout"),
            self.class_head
                .weight
                .as_slice_mut()
                .expect("standard layout"),
            self.class_head
                .bias
                .as_slice_mut()
                .expect("standard layout"),
            self.embed.as_slice_mut().expect("standard layout"),
            self.class_embeddings
                .as_slice_mut()
                .expect("standard layout"),
        ];
        data.into_iter()
            .enumerate()
            .map(|(i, data)| BlockMut {
                name: BLOCK_NAMES[i],
                stage: stage_of(i),
                data,
            })
            .collect()
    }

    /// All parameters in block order.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks()
            .iter()
            .flat_map(|b| b.data.iter().copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &StagedParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    /// Multiplies every block of `stage` by `factor`.
    pub fn scale_stage(&mut self, stage: Stage, factor: f64) {
        for b in self.blocks_mut() {
            if b.stage == stage {
                b.data.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.blocks_mut() {
            b.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &StagedParams) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
