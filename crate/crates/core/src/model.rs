//! Feature encoding, question-guided message passing and graph inference
//! over the pruned edge sets, and the hierarchical update order.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::Decoder;
use crate::error::{Result, SsgnError};
use crate::geometry::EDGE_DIM;
use crate::graph::{EdgeSet, SceneGraph, SparsityToggles};
use crate::neural::{AttentionBlock, Embedding, LayerNorm, Linear, ParamStore, Tape, Tensor, Var};
use crate::scene::Scene;

/// Order in which the three sub-graphs update node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hierarchy {
    /// Object-token graph first, then object and token graphs side by side.
    OtsgThenOsgTsg,
    /// All graphs read the encoder output; results are fused.
    Parallel,
    /// Object and token graphs first, then the object-token graph.
    OsgTsgThenOtsg,
}

impl Hierarchy {
    pub const ALL: [Hierarchy; 3] = [
        Hierarchy::OtsgThenOsgTsg,
        Hierarchy::Parallel,
        Hierarchy::OsgTsgThenOtsg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Hierarchy::OtsgThenOsgTsg => "otsg_then_osg_tsg",
            Hierarchy::Parallel => "parallel",
            Hierarchy::OsgTsgThenOtsg => "osg_tsg_then_otsg",
        }
    }
}

impl FromStr for Hierarchy {
    type Err = SsgnError;

    fn from_str(s: &str) -> Result<Self> {
        Hierarchy::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| {
                SsgnError::Config(format!(
                    "unknown hierarchy `{s}` (otsg_then_osg_tsg, parallel, osg_tsg_then_otsg)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hierarchy: Hierarchy,
    pub toggles: SparsityToggles,
    /// Maximum answer length in decoding steps, `<end>` included.
    pub max_answer_len: usize,
    /// Question words beyond this are dropped.
    pub max_question_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            d: 32,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 4,
            hierarchy: Hierarchy::OtsgThenOsgTsg,
            toggles: SparsityToggles::default(),
            max_answer_len: 12,
            max_question_len: 20,
        }
    }

    /// Full-width preset: 768 wide, 12 heads.
    pub fn full() -> Self {
        ModelConfig {
            d: 768,
            heads: 12,
            ..ModelConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(SsgnError::Config(format!(
                "hidden width {} is not divisible into {} heads",
                self.d, self.heads
            )));
        }
        if self.max_answer_len == 0 || self.max_question_len == 0 {
            return Err(SsgnError::Config(
                "max_answer_len and max_question_len must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Sizes of the learned lookup tables and input features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub question_vocab: usize,
    pub answer_vocab: usize,
    pub object_feature: usize,
    pub token_feature: usize,
}

/// Encoded features, `K x d`, `N x d`, `M x d`.
#[derive(Debug, Clone, Copy)]
pub struct EncoderState {
    pub q: Var,
    pub v: Var,
    pub t: Var,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    word: Embedding,
    position: Embedding,
    obj_feature: Linear,
    obj_box: Linear,
    tok_feature: Linear,
    tok_box: Linear,
    layers: Vec<AttentionBlock>,
    norm: LayerNorm,
    max_question_len: usize,
}

impl Encoder {
    fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        dims: &ModelDims,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.d;
        Ok(Encoder {
            word: Embedding::new(store, "enc.word", dims.question_vocab, d, rng),
            position: Embedding::new(store, "enc.position", cfg.max_question_len, d, rng),
            obj_feature: Linear::new(store, "enc.obj_feature", dims.object_feature, d, true, rng),
            obj_box: Linear::new(store, "enc.obj_box", 4, d, false, rng),
            tok_feature: Linear::new(store, "enc.tok_feature", dims.token_feature, d, true, rng),
            tok_box: Linear::new(store, "enc.tok_box", 4, d, false, rng),
            layers: (0..cfg.encoder_layers)
                .map(|i| AttentionBlock::new(store, &format!("enc.layer{i}"), d, cfg.heads, rng))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new(store, "enc.norm", d),
            max_question_len: cfg.max_question_len,
        })
    }

    /// Projects question words, objects and tokens to `d` and runs joint
    /// self-attention over `[Q; V; T]`.
    pub fn encode(
        &self,
        tape: &mut Tape,
        scene: &Scene,
        question: &[usize],
    ) -> Result<EncoderState> {
        if scene.objects.is_empty() && scene.tokens.is_empty() {
            return Err(SsgnError::Invalid(
                "scene has neither objects nor tokens".into(),
            ));
        }
        if question.is_empty() {
            return Err(SsgnError::Invalid("empty question".into()));
        }
        let words = &question[..question.len().min(self.max_question_len)];
        if let Some(w) = words.iter().find(|w| **w >= self.word.rows) {
            return Err(SsgnError::Invalid(format!(
                "question word index {w} out of range"
            )));
        }
        let k = words.len();
        let we = self.word.forward(tape, words);
        let pos: Vec<usize> = (0..k).collect();
        let pe = self.position.forward(tape, &pos);
        let q = tape.add(we, pe);

        let v = self.entities(tape, scene, &scene.objects, self.obj_feature, self.obj_box)?;
        let t = self.entities(tape, scene, &scene.tokens, self.tok_feature, self.tok_box)?;
        let (n, m) = (scene.objects.len(), scene.tokens.len());

        let mut x = tape.concat_rows(&[q, v, t]);
        for layer in &self.layers {
            x = layer.forward(tape, x);
        }
        let x = self.norm.forward(tape, x);
        Ok(EncoderState {
            q: tape.slice_rows(x, 0, k),
            v: tape.slice_rows(x, k, n),
            t: tape.slice_rows(x, k + n, m),
        })
    }

    fn entities(
        &self,
        tape: &mut Tape,
        scene: &Scene,
        list: &[crate::scene::Entity],
        feature: Linear,
        bbox: Linear,
    ) -> Result<Var> {
        let mut feats = Vec::with_capacity(list.len() * feature.input);
        let mut boxes = Vec::with_capacity(list.len() * 4);
        for e in list {
            if e.feature.len() != feature.input {
                return Err(SsgnError::Shape(format!(
                    "entity {} has a {}-dim feature, model expects {}",
                    e.id,
                    e.feature.len(),
                    feature.input
                )));
            }
            feats.extend_from_slice(&e.feature);
            boxes.extend_from_slice(&scene.box_feature(&e.bbox));
        }
        let f = tape.constant(Tensor::matrix(list.len(), feature.input, feats));
        let b = tape.constant(Tensor::matrix(list.len(), 4, boxes));
        let f = feature.forward(tape, f);
        let b = bbox.forward(tape, b);
        Ok(tape.add(f, b))
    }
}

/// Question-guided attention and node update for one directed edge set.
#[derive(Debug, Clone, Copy)]
pub struct GraphUnit {
    /// Word scoring for question pooling.
    pub w_qi: Linear,
    pub w_e: Linear,
    pub w_q: Linear,
    pub w_a: Linear,
    /// Per-edge projection in the node update.
    pub w_edge: Linear,
    pub w_t: Linear,
    pub w_x: Linear,
    pub w_e_agg: Linear,
    pub w_m: Linear,
}

impl GraphUnit {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Self {
        let mut lin =
            |part: &str, i, o| Linear::new(store, &format!("{name}.{part}"), i, o, false, rng);
        GraphUnit {
            w_qi: lin("w_qi", d, 1),
            w_e: lin("w_e", EDGE_DIM, d),
            w_q: lin("w_q", d, d),
            w_a: lin("w_a", d, 1),
            w_edge: lin("w_edge", EDGE_DIM, d),
            w_t: lin("w_t", d, d),
            w_x: lin("w_x", d, d),
            w_e_agg: lin("w_e_agg", d, d),
            w_m: lin("w_m", d, d),
        }
    }

    /// `q = sum_i softmax(W_qi q_i) q_i` over the `K` question rows.
    pub fn pool_question(&self, tape: &mut Tape, q: Var) -> Var {
        let k = tape.shape(q).0;
        let scores = self.w_qi.forward(tape, q);
        let scores = tape.reshape(scores, 1, k);
        let w = tape.masked_softmax(scores, &vec![true; k]);
        tape.matmul(w, q)
    }

    /// Receiver-by-sender attention `[receivers, senders]`, softmax over the
    /// kept senders of each receiver.
    pub fn mp(&self, tape: &mut Tape, edges: &EdgeSet, q: Var) -> Var {
        let (senders, receivers) = (edges.rows(), edges.cols());
        let (feats, mask) = edges.receiver_major();
        let e = tape.constant(Tensor::matrix(receivers * senders, EDGE_DIM, feats));
        let logits = self.mp_logits(tape, e, q);
        let logits = tape.reshape(logits, receivers, senders);
        tape.masked_softmax(logits, &mask)
    }

    fn mp_logits(&self, tape: &mut Tape, e: Var, q: Var) -> Var {
        let pe = self.w_e.forward(tape, e);
        let pq = self.w_q.forward(tape, q);
        let a = tape.add_row(pe, pq);
        let a = tape.tanh(a);
        self.w_a.forward(tape, a)
    }

    /// `W_x x_i + W_e' sum_j A_ij W_edge e_ij + W_m W_t sum_j A_ij y_j`.
    pub fn gin(
        &self,
        tape: &mut Tape,
        edges: &EdgeSet,
        a: Var,
        receivers: Var,
        senders: Var,
    ) -> Var {
        let (ns, nr) = (edges.rows(), edges.cols());
        let (feats, _) = edges.receiver_major();
        let e = tape.constant(Tensor::matrix(nr * ns, EDGE_DIM, feats));
        let pe = self.w_edge.forward(tape, e);
        let e_agg = tape.row_weighted_sum(a, pe);
        let msg = tape.matmul(a, senders);
        let msg = self.w_t.forward(tape, msg);
        let x = self.w_x.forward(tape, receivers);
        let e_term = self.w_e_agg.forward(tape, e_agg);
        let m_term = self.w_m.forward(tape, msg);
        let s = tape.add(x, e_term);
        tape.add(s, m_term)
    }

    /// Pooling, attention and update in one call.
    pub fn update(
        &self,
        tape: &mut Tape,
        edges: &EdgeSet,
        q: Var,
        receivers: Var,
        senders: Var,
    ) -> Var {
        let pooled = self.pool_question(tape, q);
        let a = self.mp(tape, edges, pooled);
        self.gin(tape, edges, a, receivers, senders)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Reasoner {
    pub t2v: GraphUnit,
    pub v2t: GraphUnit,
    pub v2v: GraphUnit,
    pub t2t: GraphUnit,
    fuse: Option<(Linear, Linear)>,
    hierarchy: Hierarchy,
}

impl Reasoner {
    fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d;
        let t2v = GraphUnit::new(store, "graph.t2v", d, rng);
        let v2t = GraphUnit::new(store, "graph.v2t", d, rng);
        let v2v = GraphUnit::new(store, "graph.v2v", d, rng);
        let t2t = GraphUnit::new(store, "graph.t2t", d, rng);
        let fuse = (cfg.hierarchy == Hierarchy::Parallel).then(|| {
            (
                Linear::new(store, "graph.fuse_v", 2 * d, d, false, rng),
                Linear::new(store, "graph.fuse_t", 2 * d, d, false, rng),
            )
        });
        Reasoner {
            t2v,
            v2t,
            v2v,
            t2t,
            fuse,
            hierarchy: cfg.hierarchy,
        }
    }

    /// Final object and token features after all graph updates.
    pub fn forward(&self, tape: &mut Tape, state: &EncoderState, graph: &SceneGraph) -> (Var, Var) {
        let EncoderState { q, v, t } = *state;
        match self.hierarchy {
            Hierarchy::OtsgThenOsgTsg => {
                let v1 = self.t2v.update(tape, &graph.t2v, q, v, t);
                let t1 = self.v2t.update(tape, &graph.v2t, q, t, v);
                let v2 = self.v2v.update(tape, &graph.v2v, q, v1, v1);
                let t2 = self.t2t.update(tape, &graph.t2t, q, t1, t1);
                (v2, t2)
            }
            Hierarchy::OsgTsgThenOtsg => {
                let v1 = self.v2v.update(tape, &graph.v2v, q, v, v);
                let t1 = self.t2t.update(tape, &graph.t2t, q, t, t);
                let v2 = self.t2v.update(tape, &graph.t2v, q, v1, t1);
                let t2 = self.v2t.update(tape, &graph.v2t, q, t1, v1);
                (v2, t2)
            }
            Hierarchy::Parallel => {
                let (fuse_v, fuse_t) = self
                    .fuse
                    .expect("fusion layers exist for the parallel variant");
                let vo = self.t2v.update(tape, &graph.t2v, q, v, t);
                let to = self.v2t.update(tape, &graph.v2t, q, t, v);
                let vs = self.v2v.update(tape, &graph.v2v, q, v, v);
                let ts = self.t2t.update(tape, &graph.t2t, q, t, t);
                let vc = tape.concat_cols(&[vo, vs]);
                let tc = tape.concat_cols(&[to, ts]);
                (fuse_v.forward(tape, vc), fuse_t.forward(tape, tc))
            }
        }
    }
}

/// The whole network. Parameters live in a separate [`ParamStore`] so that
/// the architecture can be shared across threads while one store is
/// updated.
#[derive(Debug, Clone)]
pub struct Ssgn {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub encoder: Encoder,
    pub reasoner: Reasoner,
    pub decoder: Decoder,
}

/// Per-example inputs to one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    pub scene: &'a Scene,
    pub graph: &'a SceneGraph,
    pub question: &'a [usize],
}

/// Outputs of encoder and graph reasoning, ready for decoding.
#[derive(Debug, Clone, Copy)]
pub struct Reasoned {
    pub q: Var,
    pub v: Var,
    pub t: Var,
}

impl Ssgn {
    /// Builds the architecture with freshly initialized parameters.
    pub fn new(config: ModelConfig, dims: ModelDims, seed: u64) -> Result<(Ssgn, ParamStore)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, &config, &dims, &mut rng)?;
        let reasoner = Reasoner::new(&mut store, &config, &mut rng);
        let decoder = Decoder::new(&mut store, &config, dims.answer_vocab, &mut rng)?;
        Ok((
            Ssgn {
                config,
                dims,
                encoder,
                reasoner,
                decoder,
            },
            store,
        ))
    }

    pub fn reason(&self, tape: &mut Tape, inputs: Inputs) -> Result<Reasoned> {
        let state = self.encoder.encode(tape, inputs.scene, inputs.question)?;
        let (v, t) = self.reasoner.forward(tape, &state, inputs.graph);
        Ok(Reasoned { q: state.q, v, t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::graph::PruneConfig;
    use crate::neural::check_gradients;
    use crate::scene::{Entity, EntityKind};

    fn entity(id: u32, kind: EntityKind, b: [f64; 4], dim: usize) -> Entity {
        Entity {
            id,
            kind,
            bbox: BoundingBox::new(b[0], b[1], b[2], b[3]),
            label: format!("e{id}"),
            feature: (0..dim)
                .map(|k| ((id as usize * 7 + k * 3) % 5) as f64 * 0.2 - 0.4)
                .collect(),
        }
    }

    fn scene(objects: usize, tokens: usize) -> Scene {
        let obj = [
            [10.0, 10.0, 60.0, 50.0],
            [12.0, 11.0, 61.0, 52.0],
            [200.0, 150.0, 260.0, 220.0],
        ];
        let tok = [
            [20.0, 20.0, 40.0, 30.0],
            [42.0, 20.0, 60.0, 30.0],
            [210.0, 160.0, 240.0, 172.0],
            [600.0, 400.0, 630.0, 410.0],
        ];
        Scene {
            image_width: 640.0,
            image_height: 480.0,
            objects: (0..objects)
                .map(|i| entity(i as u32, EntityKind::Object, obj[i], 3))
                .collect(),
            tokens: (0..tokens)
                .map(|i| entity((objects + i) as u32, EntityKind::Token, tok[i], 3))
                .collect(),
            examples: vec![],
        }
    }

    fn dims() -> ModelDims {
        ModelDims {
            question_vocab: 9,
            answer_vocab: 7,
            object_feature: 3,
            token_feature: 3,
        }
    }

    fn small(h: Hierarchy) -> ModelConfig {
        ModelConfig {
            d: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            hierarchy: h,
            ..ModelConfig::desk()
        }
    }

    #[test]
    fn encode_shapes() {
        let cfg = ModelConfig {
            d: 32,
            ..small(Hierarchy::OtsgThenOsgTsg)
        };
        let (model, store) = Ssgn::new(cfg, dims(), 1).unwrap();
        let s = scene(3, 4);
        let mut tape = Tape::new(&store);
        let st = model
            .encoder
            .encode(&mut tape, &s, &[4, 5, 6, 7, 8])
            .unwrap();
        assert_eq!(tape.shape(st.q), (5, 32));
        assert_eq!(tape.shape(st.v), (3, 32));
        assert_eq!(tape.shape(st.t), (4, 32));
        let empty = scene(0, 0);
        assert!(model.encoder.encode(&mut tape, &empty, &[4]).is_err());
    }

    #[test]
    fn encode_is_permutation_equivariant_over_objects() {
        let (model, store) = Ssgn::new(small(Hierarchy::Parallel), dims(), 2).unwrap();
        let s = scene(3, 2);
        let mut swapped = s.clone();
        swapped.objects.swap(0, 2);
        let mut tape = Tape::new(&store);
        let a = model.encoder.encode(&mut tape, &s, &[4, 5]).unwrap();
        let b = model.encoder.encode(&mut tape, &swapped, &[4, 5]).unwrap();
        let (va, vb) = (tape.value(a.v).clone(), tape.value(b.v).clone());
        for (i, j) in [(0, 2), (1, 1), (2, 0)] {
            for (x, y) in va.row_slice(i).iter().zip(vb.row_slice(j)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pooling_cases() {
        let (model, mut store) = Ssgn::new(small(Hierarchy::OtsgThenOsgTsg), dims(), 3).unwrap();
        let unit = model.reasoner.t2v;
        let qd: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        {
            let mut tape = Tape::new(&store);
            let q1 = tape.constant(Tensor::matrix(1, 8, qd[..8].to_vec()));
            let p = unit.pool_question(&mut tape, q1);
            assert_eq!(tape.value(p).data(), &qd[..8]);

            // Weights from a per-word recomputation.
            let q = tape.constant(Tensor::matrix(3, 8, qd.clone()));
            let p = unit.pool_question(&mut tape, q);
            let w = tape.params().get(unit.w_qi.w).data().to_vec();
            let s: Vec<f64> = (0..3)
                .map(|i| {
                    qd[i * 8..(i + 1) * 8]
                        .iter()
                        .zip(&w)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            let z: f64 = s.iter().map(|x| x.exp()).sum();
            for c in 0..8 {
                let expect: f64 = (0..3).map(|i| s[i].exp() / z * qd[i * 8 + c]).sum();
                assert!((tape.value(p).data()[c] - expect).abs() < 1e-12);
            }
        }
        store.get_mut(unit.w_qi.w).data_mut().fill(0.0);
        let mut tape = Tape::new(&store);
        let q = tape.constant(Tensor::matrix(3, 8, qd.clone()));
        let p = unit.pool_question(&mut tape, q);
        for c in 0..8 {
            let mean = (qd[c] + qd[8 + c] + qd[16 + c]) / 3.0;
            assert!((tape.value(p).data()[c] - mean).abs() < 1e-12);
        }
    }

    fn graph_for(s: &Scene, toggles: SparsityToggles) -> SceneGraph {
        SceneGraph::build(s, &PruneConfig::default(), toggles).unwrap()
    }

    #[test]
    fn mp_respects_the_mask_and_rows_sum_to_one() {
        let (model, mut store) = Ssgn::new(small(Hierarchy::OtsgThenOsgTsg), dims(), 4).unwrap();
        let s = scene(3, 4);
        let g = graph_for(&s, SparsityToggles::default());
        let unit = model.reasoner.t2v;
        let run = |store: &ParamStore| {
            let mut tape = Tape::new(store);
            let q = tape.constant(Tensor::row(vec![0.3; 8]));
            let a = unit.mp(&mut tape, &g.t2v, q);
            tape.value(a).clone()
        };
        let a = run(&store);
        let (_, mask) = g.t2v.receiver_major();
        assert_eq!(a.shape(), &[3, 4]);
        for r in 0..3 {
            let row = a.row_slice(r);
            let kept: Vec<bool> = mask[r * 4..(r + 1) * 4].to_vec();
            for (x, k) in row.iter().zip(&kept) {
                if *k {
                    assert!(*x > 0.0 && *x < 1.0 + 1e-15);
                } else {
                    assert_eq!(*x, 0.0);
                }
            }
            let sum: f64 = row.iter().sum();
            if kept.iter().any(|k| *k) {
                assert!((sum - 1.0).abs() < 1e-6);
            } else {
                assert_eq!(sum, 0.0);
            }
        }
        store.get_mut(unit.w_a.w).data_mut().fill(0.0);
        let a = run(&store);
        for r in 0..3 {
            let kept = mask[r * 4..(r + 1) * 4].iter().filter(|k| **k).count();
            for (x, k) in a.row_slice(r).iter().zip(&mask[r * 4..(r + 1) * 4]) {
                let expect = if *k { 1.0 / kept as f64 } else { 0.0 };
                assert!((x - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gin_zero_output_weights_give_zero() {
        let (model, mut store) = Ssgn::new(small(Hierarchy::OtsgThenOsgTsg), dims(), 5).unwrap();
        let unit = model.reasoner.t2v;
        for id in [unit.w_x.w, unit.w_e_agg.w, unit.w_m.w] {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let s = scene(3, 4);
        let g = graph_for(&s, SparsityToggles::default());
        let mut tape = Tape::new(&store);
        let st = model.encoder.encode(&mut tape, &s, &[4, 5]).unwrap();
        let out = unit.update(&mut tape, &g.t2v, st.q, st.v, st.t);
        assert!(tape.value(out).data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn variants_produce_distinct_token_features() {
        let s = scene(3, 4);
        let g = graph_for(&s, SparsityToggles::default());
        let outs: Vec<Vec<f64>> = Hierarchy::ALL
            .iter()
            .map(|h| {
                let (model, store) = Ssgn::new(small(*h), dims(), 6).unwrap();
                let mut tape = Tape::new(&store);
                let r = model
                    .reason(
                        &mut tape,
                        Inputs {
                            scene: &s,
                            graph: &g,
                            question: &[4, 5, 6],
                        },
                    )
                    .unwrap();
                tape.value(r.t).data().to_vec()
            })
            .collect();
        assert_ne!(outs[0], outs[1]);
        assert_ne!(outs[0], outs[2]);
        assert_ne!(outs[1], outs[2]);
    }

    #[test]
    fn disabling_pruning_changes_outputs() {
        let s = scene(3, 4);
        let pruned = graph_for(&s, SparsityToggles::default());
        let full = graph_for(
            &s,
            SparsityToggles {
                otsg: false,
                osg: false,
                tsg: false,
            },
        );
        assert!(pruned.v2v.kept_count() < full.v2v.kept_count());
        let (model, store) = Ssgn::new(small(Hierarchy::OtsgThenOsgTsg), dims(), 7).unwrap();
        let run = |g: &SceneGraph| {
            let mut tape = Tape::new(&store);
            let r = model
                .reason(
                    &mut tape,
                    Inputs {
                        scene: &s,
                        graph: g,
                        question: &[4],
                    },
                )
                .unwrap();
            tape.value(r.v).data().to_vec()
        };
        assert_ne!(run(&pruned), run(&full));
    }

    #[test]
    fn reasoning_gradient_check_all_variants() {
        let s = scene(2, 2);
        let g = graph_for(&s, SparsityToggles::default());
        for h in Hierarchy::ALL {
            let (model, store) = Ssgn::new(small(h), dims(), 8).unwrap();
            let report = check_gradients(&store, |tape| {
                let r = model.reason(
                    tape,
                    Inputs {
                        scene: &s,
                        graph: &g,
                        question: &[4, 5, 6],
                    },
                )?;
                let both = tape.concat_rows(&[r.v, r.t]);
                let sq = tape.mul(both, both);
                let y = tape.tanh(sq);
                Ok(tape.sum(y))
            })
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "{h:?}: {:?}", report.worst());
        }
    }
}
