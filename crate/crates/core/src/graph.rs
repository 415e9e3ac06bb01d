//! Pairwise edge features, the three spatial sparsity rules, sparsity
//! statistics and graph export.
//!
//! An [`EdgeSet`] is indexed `[source][target]`. The target is the reference
//! box of the edge feature and the receiver during message passing.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgnError};
use crate::geometry::{
    center_distance, edge_feature, gap_distance, iou_family, overlap_ratio, BoundingBox,
    EdgeFeature, IouKind, EDGE_DIM,
};
use crate::scene::{Entity, Scene};

/// Thresholds of the three sparsity functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Distance fraction of the image diagonal, and DIoU floor, for object-token edges.
    pub theta: f64,
    /// DIoU ceiling for object-object edges.
    pub epsilon: f64,
    /// Gap limit for token-token edges, in receiver diagonals.
    pub alpha: f64,
    /// Lower bound of the sender/receiver height ratio.
    pub beta: f64,
    /// Upper bound of the sender/receiver height ratio.
    pub gamma: f64,
    /// Overlap-ratio ceiling for token-token edges.
    pub delta: f64,
    /// Overlap measure in the object-token and object-object rules.
    #[serde(default = "default_iou")]
    pub iou: IouKind,
}

fn default_iou() -> IouKind {
    IouKind::DIoU
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            theta: 0.5,
            epsilon: 0.3,
            alpha: 5.0,
            beta: 0.3,
            gamma: 2.0,
            delta: 0.5,
            iou: IouKind::DIoU,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, n: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SsgnError::Config(format!(
                    "{n} must lie in [0, 1], got {v}"
                )))
            }
        };
        unit(self.theta, "theta")?;
        unit(self.epsilon, "epsilon")?;
        unit(self.delta, "delta")?;
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(SsgnError::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta <= self.gamma) {
            return Err(SsgnError::Config(format!(
                "need 0 < beta <= gamma, got beta {} gamma {}",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    rows: usize,
    cols: usize,
    features: Vec<EdgeFeature>,
    keep: Vec<bool>,
}

impl EdgeSet {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn feature(&self, src: usize, dst: usize) -> &EdgeFeature {
        &self.features[src * self.cols + dst]
    }

    pub fn kept(&self, src: usize, dst: usize) -> bool {
        self.keep[src * self.cols + dst]
    }

    /// Row-major keep mask, `[src * cols + dst]`.
    pub fn keep_mask(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    /// Features laid out receiver-major (`[dst * rows + src]`), flattened,
    /// with the matching mask. This is the layout message passing consumes.
    pub fn receiver_major(&self) -> (Vec<f64>, Vec<bool>) {
        let mut feats = Vec::with_capacity(self.rows * self.cols * EDGE_DIM);
        let mut mask = Vec::with_capacity(self.rows * self.cols);
        for dst in 0..self.cols {
            for src in 0..self.rows {
                feats.extend_from_slice(self.feature(src, dst));
                mask.push(self.kept(src, dst));
            }
        }
        (feats, mask)
    }

    /// Same features with every edge kept except same-list self pairs.
    pub fn unpruned(&self, same_list: bool) -> EdgeSet {
        let mut e = self.clone();
        for s in 0..e.rows {
            for d in 0..e.cols {
                e.keep[s * e.cols + d] = !(same_list && s == d);
            }
        }
        e
    }

    /// Drop every kept edge for which `predicate(src, dst)` is false.
    fn retain(&self, mut predicate: impl FnMut(usize, usize) -> Result<bool>) -> Result<EdgeSet> {
        let mut out = self.clone();
        for s in 0..self.rows {
            for d in 0..self.cols {
                let i = s * self.cols + d;
                if out.keep[i] && !predicate(s, d)? {
                    out.keep[i] = false;
                    out.features[i] = [0.0; EDGE_DIM];
                }
            }
        }
        Ok(out)
    }

    fn expect_shape(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if self.rows == rows && self.cols == cols {
            Ok(())
        } else {
            Err(SsgnError::Shape(format!(
                "{what}: edge set is {}x{}, entities give {rows}x{cols}",
                self.rows, self.cols
            )))
        }
    }
}

fn boxes(entities: &[Entity]) -> Vec<BoundingBox> {
    entities.iter().map(|e| e.bbox).collect()
}

/// All pairwise edge features between `sources` and `targets`.
/// With `same_list`, self pairs are masked out.
pub fn build_edges(sources: &[Entity], targets: &[Entity], same_list: bool) -> Result<EdgeSet> {
    build_edges_from_boxes(&boxes(sources), &boxes(targets), same_list)
}

pub fn build_edges_from_boxes(
    sources: &[BoundingBox],
    targets: &[BoundingBox],
    same_list: bool,
) -> Result<EdgeSet> {
    if same_list && sources.len() != targets.len() {
        return Err(SsgnError::Shape("same-list edge set must be square".into()));
    }
    let (rows, cols) = (sources.len(), targets.len());
    let mut features = Vec::with_capacity(rows * cols);
    let mut keep = Vec::with_capacity(rows * cols);
    for (s, sb) in sources.iter().enumerate() {
        for (d, db) in targets.iter().enumerate() {
            let self_pair = same_list && s == d;
            features.push(if self_pair {
                [0.0; EDGE_DIM]
            } else {
                edge_feature(sb, db)?
            });
            keep.push(!self_pair);
        }
    }
    Ok(EdgeSet {
        rows,
        cols,
        features,
        keep,
    })
}

/// Object-token rule: keep when the centers are within `theta * d_img`
/// or DIoU (or the configured variant) is at least `theta`. Symmetric, so
/// it serves both directions.
pub fn otsg_keep(a: &BoundingBox, b: &BoundingBox, d_img: f64, cfg: &PruneConfig) -> Result<bool> {
    Ok(center_distance(a, b) <= cfg.theta * d_img || iou_family(cfg.iou, a, b)? >= cfg.theta)
}

/// Object-object rule: keep when the centers are within `theta * d_img`
/// and DIoU is at most `epsilon` (near-duplicates are cut).
pub fn osg_keep(a: &BoundingBox, b: &BoundingBox, d_img: f64, cfg: &PruneConfig) -> Result<bool> {
    Ok(center_distance(a, b) <= cfg.theta * d_img && iou_family(cfg.iou, a, b)? <= cfg.epsilon)
}

/// Token-token rule for the edge `sender -> receiver`, relative to the
/// receiver: gap within `alpha` receiver diagonals, sender height within
/// `[beta, gamma]` times the receiver height, overlap ratio at most `delta`.
pub fn tsg_keep(
    sender: &BoundingBox,
    receiver: &BoundingBox,
    image_height: f64,
    cfg: &PruneConfig,
) -> Result<bool> {
    if sender.height() <= 0.0 || receiver.height() <= 0.0 {
        return Err(SsgnError::Geometry("token with zero height".into()));
    }
    let h_recv = receiver.height() / image_height;
    let h_send = sender.height() / image_height;
    Ok(
        gap_distance(sender, receiver) <= cfg.alpha * receiver.diagonal()
            && cfg.beta * h_recv <= h_send
            && h_send <= cfg.gamma * h_recv
            && overlap_ratio(sender, receiver)? <= cfg.delta,
    )
}

/// Prune an object-token edge set built in either direction.
pub fn prune_otsg(
    edges: &EdgeSet,
    sources: &[Entity],
    targets: &[Entity],
    d_img: f64,
    cfg: &PruneConfig,
) -> Result<EdgeSet> {
    edges.expect_shape(sources.len(), targets.len(), "otsg")?;
    edges.retain(|s, d| otsg_keep(&sources[s].bbox, &targets[d].bbox, d_img, cfg))
}

pub fn prune_osg(
    edges: &EdgeSet,
    objects: &[Entity],
    d_img: f64,
    cfg: &PruneConfig,
) -> Result<EdgeSet> {
    edges.expect_shape(objects.len(), objects.len(), "osg")?;
    edges.retain(|s, d| osg_keep(&objects[s].bbox, &objects[d].bbox, d_img, cfg))
}

pub fn prune_tsg(
    edges: &EdgeSet,
    tokens: &[Entity],
    image_height: f64,
    cfg: &PruneConfig,
) -> Result<EdgeSet> {
    edges.expect_shape(tokens.len(), tokens.len(), "tsg")?;
    edges.retain(|s, d| tsg_keep(&tokens[s].bbox, &tokens[d].bbox, image_height, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    /// Candidate edges before pruning.
    pub total: usize,
    /// Candidates removed by pruning.
    pub pruned: usize,
    /// `pruned / total`, or 0 when there are no candidates.
    pub ratio: f64,
}

pub fn sparsity_ratio(before: &EdgeSet, after: &EdgeSet) -> Result<SparsityStats> {
    if before.rows != after.rows || before.cols != after.cols {
        return Err(SsgnError::Shape(format!(
            "sparsity ratio over {}x{} and {}x{}",
            before.rows, before.cols, after.rows, after.cols
        )));
    }
    if before.keep.iter().zip(&after.keep).any(|(b, a)| *a && !*b) {
        return Err(SsgnError::Invalid(
            "pruned edge set keeps an edge the original dropped".into(),
        ));
    }
    let total = before.kept_count();
    let pruned = total - after.kept_count();
    let ratio = if total == 0 {
        0.0
    } else {
        pruned as f64 / total as f64
    };
    Ok(SparsityStats {
        total,
        pruned,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Otsg,
    Osg,
    Tsg,
}

impl GraphKind {
    pub const ALL: [GraphKind; 3] = [GraphKind::Otsg, GraphKind::Osg, GraphKind::Tsg];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Otsg => "otsg",
            GraphKind::Osg => "osg",
            GraphKind::Tsg => "tsg",
        }
    }
}

impl std::str::FromStr for GraphKind {
    type Err = SsgnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "otsg" => Ok(GraphKind::Otsg),
            "osg" => Ok(GraphKind::Osg),
            "tsg" => Ok(GraphKind::Tsg),
            other => Err(SsgnError::Invalid(format!(
                "unknown graph `{other}` (otsg, osg, tsg)"
            ))),
        }
    }
}

/// Which sparsity functions are active. A disabled graph keeps every
/// candidate edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityToggles {
    pub otsg: bool,
    pub osg: bool,
    pub tsg: bool,
}

impl Default for SparsityToggles {
    fn default() -> Self {
        SparsityToggles {
            otsg: true,
            osg: true,
            tsg: true,
        }
    }
}

impl SparsityToggles {
    /// All eight on/off combinations.
    pub fn all_combinations() -> Vec<SparsityToggles> {
        (0..8u8)
            .map(|m| SparsityToggles {
                otsg: m & 1 != 0,
                osg: m & 2 != 0,
                tsg: m & 4 != 0,
            })
            .collect()
    }
}

/// The four directed edge sets of one scene, pruned and unpruned.
#[derive(Debug, Clone)]
pub struct SceneGraph {
    /// Tokens -> objects (objects receive).
    pub t2v: EdgeSet,
    /// Objects -> tokens (tokens receive).
    pub v2t: EdgeSet,
    pub v2v: EdgeSet,
    pub t2t: EdgeSet,
    pub full_t2v: EdgeSet,
    pub full_v2t: EdgeSet,
    pub full_v2v: EdgeSet,
    pub full_t2t: EdgeSet,
}

impl SceneGraph {
    pub fn build(scene: &Scene, cfg: &PruneConfig, toggles: SparsityToggles) -> Result<SceneGraph> {
        let d_img = scene.diagonal();
        let (objs, toks) = (&scene.objects, &scene.tokens);
        let full_t2v = build_edges(toks, objs, false)?;
        let full_v2t = build_edges(objs, toks, false)?;
        let full_v2v = build_edges(objs, objs, true)?;
        let full_t2t = build_edges(toks, toks, true)?;
        let t2v = if toggles.otsg {
            prune_otsg(&full_t2v, toks, objs, d_img, cfg)?
        } else {
            full_t2v.clone()
        };
        let v2t = if toggles.otsg {
            prune_otsg(&full_v2t, objs, toks, d_img, cfg)?
        } else {
            full_v2t.clone()
        };
        let v2v = if toggles.osg {
            prune_osg(&full_v2v, objs, d_img, cfg)?
        } else {
            full_v2v.clone()
        };
        let t2t = if toggles.tsg {
            prune_tsg(&full_t2t, toks, scene.image_height, cfg)?
        } else {
            full_t2t.clone()
        };
        Ok(SceneGraph {
            t2v,
            v2t,
            v2v,
            t2t,
            full_t2v,
            full_v2t,
            full_v2v,
            full_t2t,
        })
    }

    /// Sparsity per graph. Object-token counts cover both directions.
    pub fn stats(&self, kind: GraphKind) -> SparsityStats {
        let pair = |a: (&EdgeSet, &EdgeSet), b: (&EdgeSet, &EdgeSet)| {
            let x = sparsity_ratio(a.0, a.1).expect("pruned from the same edges");
            let y = sparsity_ratio(b.0, b.1).expect("pruned from the same edges");
            let total = x.total + y.total;
            let pruned = x.pruned + y.pruned;
            SparsityStats {
                total,
                pruned,
                ratio: if total == 0 {
                    0.0
                } else {
                    pruned as f64 / total as f64
                },
            }
        };
        match kind {
            GraphKind::Otsg => pair((&self.full_t2v, &self.t2v), (&self.full_v2t, &self.v2t)),
            GraphKind::Osg => sparsity_ratio(&self.full_v2v, &self.v2v).expect("same shape"),
            GraphKind::Tsg => sparsity_ratio(&self.full_t2t, &self.t2t).expect("same shape"),
        }
    }
}

/// Per-graph mean of per-scene sparsity ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SparsitySummary {
    pub scenes: usize,
    pub otsg: f64,
    pub osg: f64,
    pub tsg: f64,
}

impl SparsitySummary {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a SceneGraph>) -> SparsitySummary {
        let mut s = SparsitySummary::default();
        for g in graphs {
            s.scenes += 1;
            s.otsg += g.stats(GraphKind::Otsg).ratio;
            s.osg += g.stats(GraphKind::Osg).ratio;
            s.tsg += g.stats(GraphKind::Tsg).ratio;
        }
        if s.scenes > 0 {
            let n = s.scenes as f64;
            s.otsg /= n;
            s.osg /= n;
            s.tsg /= n;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
}

impl std::str::FromStr for ExportFormat {
    type Err = SsgnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            other => Err(SsgnError::Invalid(format!(
                "unknown export format `{other}` (json, dot)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub id: u32,
    pub kind: String,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEdge {
    pub src: u32,
    pub dst: u32,
    pub graph: GraphKind,
    pub feature: [f64; EDGE_DIM],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<ExportEdge>,
}

/// Surviving edges of the selected graphs, in (graph, source, target) order.
pub fn collect_export(scene: &Scene, graph: &SceneGraph, kinds: &[GraphKind]) -> GraphExport {
    let nodes = scene
        .entities()
        .map(|e| ExportNode {
            id: e.id,
            kind: e.kind.as_str().to_string(),
            label: e.label.clone(),
            bbox: e.bbox,
        })
        .collect();
    let mut edges = Vec::new();
    let mut push = |set: &EdgeSet, src: &[Entity], dst: &[Entity], kind: GraphKind| {
        for (s, from) in src.iter().enumerate().take(set.rows()) {
            for (d, to) in dst.iter().enumerate().take(set.cols()) {
                if set.kept(s, d) {
                    edges.push(ExportEdge {
                        src: from.id,
                        dst: to.id,
                        graph: kind,
                        feature: *set.feature(s, d),
                    });
                }
            }
        }
    };
    for &kind in kinds {
        match kind {
            GraphKind::Otsg => {
                push(&graph.t2v, &scene.tokens, &scene.objects, kind);
                push(&graph.v2t, &scene.objects, &scene.tokens, kind);
            }
            GraphKind::Osg => push(&graph.v2v, &scene.objects, &scene.objects, kind),
            GraphKind::Tsg => push(&graph.t2t, &scene.tokens, &scene.tokens, kind),
        }
    }
    GraphExport { nodes, edges }
}

pub fn export_graph(
    scene: &Scene,
    graph: &SceneGraph,
    kinds: &[GraphKind],
    format: ExportFormat,
) -> Vec<u8> {
    let export = collect_export(scene, graph, kinds);
    match format {
        ExportFormat::Json => {
            let mut out =
                serde_json::to_vec_pretty(&export).expect("export serialization cannot fail");
            out.push(b'\n');
            out
        }
        ExportFormat::Dot => render_dot(&export).into_bytes(),
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn render_dot(export: &GraphExport) -> String {
    let mut out = String::from("digraph scene {\n");
    for n in &export.nodes {
        let shape = if n.kind == "object" { "box" } else { "ellipse" };
        out.push_str(&format!(
            "  n{} [label=\"{}\", shape={}];\n",
            n.id,
            dot_escape(&n.label),
            shape
        ));
    }
    for e in &export.edges {
        out.push_str(&format!(
            "  n{} -> n{} [label=\"{}\"];\n",
            e.src,
            e.dst,
            e.graph.as_str()
        ));
    }
    out.push_str("}\n");
    out
}

/// Keep mask of one directed edge set recovered from a JSON export.
pub fn keep_mask_from_export(
    export: &GraphExport,
    kind: GraphKind,
    sources: &[Entity],
    targets: &[Entity],
) -> Vec<bool> {
    let mut mask = vec![false; sources.len() * targets.len()];
    for e in export.edges.iter().filter(|e| e.graph == kind) {
        let s = sources.iter().position(|x| x.id == e.src);
        let d = targets.iter().position(|x| x.id == e.dst);
        if let (Some(s), Some(d)) = (s, d) {
            mask[s * targets.len() + d] = true;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::diou;
    use crate::scene::EntityKind;

    #[test]
    fn iou_variant_is_configurable() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::new(3.0, 3.0, 13.0, 13.0);
        let cfg = PruneConfig::default();
        assert!(osg_keep(&a, &b, 100.0, &cfg).unwrap());
        let plain = PruneConfig {
            iou: IouKind::IoU,
            ..cfg
        };
        assert!(!osg_keep(&a, &b, 100.0, &plain).unwrap());
    }

    fn ent(id: u32, kind: EntityKind, b: BoundingBox) -> Entity {
        Entity {
            id,
            kind,
            bbox: b,
            label: format!("e{id}"),
            feature: vec![],
        }
    }

    fn boxes_at(kind: EntityKind, list: &[[f64; 4]]) -> Vec<Entity> {
        list.iter()
            .enumerate()
            .map(|(i, c)| ent(i as u32, kind, BoundingBox::from(*c)))
            .collect()
    }

    #[test]
    fn build_edges_shapes_and_self_pairs() {
        let s = boxes_at(
            EntityKind::Object,
            &[[0., 0., 1., 1.], [2., 2., 4., 4.], [1., 0., 3., 1.]],
        );
        let t = boxes_at(
            EntityKind::Token,
            &[
                [0., 0., 1., 1.],
                [5., 5., 6., 7.],
                [1., 1., 2., 2.],
                [3., 0., 4., 1.],
            ],
        );
        let e = build_edges(&s, &t, false).unwrap();
        assert_eq!((e.rows(), e.cols()), (3, 4));
        assert!(e.keep_mask().iter().all(|k| *k));
        assert_eq!(
            *e.feature(1, 3),
            edge_feature(&s[1].bbox, &t[3].bbox).unwrap()
        );

        let same = build_edges(&s[..2], &s[..2], true).unwrap();
        assert!(!same.kept(0, 0) && !same.kept(1, 1));
        assert!(same.kept(0, 1) && same.kept(1, 0));
    }

    #[test]
    fn otsg_examples() {
        let cfg = PruneConfig::default();
        let d_img = 20000f64.sqrt();
        let b = BoundingBox::new(30.0, 30.0, 50.0, 50.0);
        assert!(otsg_keep(&b, &b, d_img, &cfg).unwrap());

        let tok = BoundingBox::from_center(10.0, 10.0, 4.0, 4.0);
        let obj = BoundingBox::from_center(80.0, 80.0, 4.0, 4.0);
        assert!(diou(&tok, &obj).unwrap() < 0.5);
        assert!(!otsg_keep(&tok, &obj, d_img, &cfg).unwrap());

        // 70 apart on one axis: the distance clause alone keeps it.
        let tok = BoundingBox::from_center(10.0, 50.0, 30.0, 30.0);
        let obj = BoundingBox::from_center(80.0, 50.0, 30.0, 30.0);
        let d = diou(&tok, &obj).unwrap();
        assert!(d < 0.0 && d < cfg.theta);
        assert!(otsg_keep(&tok, &obj, d_img, &cfg).unwrap());
    }

    #[test]
    fn osg_examples() {
        let cfg = PruneConfig::default();
        let d_img = 20000f64.sqrt();
        let a = BoundingBox::new(10.0, 10.0, 40.0, 40.0);
        assert!(!osg_keep(&a, &a, d_img, &cfg).unwrap(), "duplicate");

        let far = BoundingBox::from_center(25.0 + 0.8 * d_img, 25.0, 30.0, 30.0);
        assert!(!osg_keep(&a, &far, d_img, &cfg).unwrap(), "too far");

        let near = BoundingBox::from_center(75.0, 25.0, 30.0, 30.0);
        assert!(diou(&a, &near).unwrap() <= cfg.epsilon);
        assert!(osg_keep(&a, &near, d_img, &cfg).unwrap());
    }

    #[test]
    fn tsg_examples() {
        let cfg = PruneConfig::default();
        let recv = BoundingBox::new(0.0, 0.0, 10.0, 2.0);
        assert!(tsg_keep(&BoundingBox::new(12.0, 0.0, 22.0, 2.0), &recv, 100.0, &cfg).unwrap());
        assert!(!tsg_keep(&BoundingBox::new(70.0, 0.0, 80.0, 2.0), &recv, 100.0, &cfg).unwrap());
        assert!(!tsg_keep(&BoundingBox::new(12.0, 0.0, 22.0, 0.2), &recv, 100.0, &cfg).unwrap());
        let flat = BoundingBox::new(0.0, 1.0, 5.0, 1.0);
        assert!(tsg_keep(&flat, &recv, 100.0, &cfg).is_err());
    }

    #[test]
    fn tsg_is_receiver_relative() {
        let cfg = PruneConfig::default();
        let small = BoundingBox::new(0.0, 0.0, 4.0, 2.0);
        let big = BoundingBox::new(5.0, 0.0, 15.0, 10.0);
        // big -> small: height 5x the receiver's, outside [0.3, 2].
        assert!(!tsg_keep(&big, &small, 100.0, &cfg).unwrap());
        // small -> big: 0.2x the receiver's, also outside.
        assert!(!tsg_keep(&small, &big, 100.0, &cfg).unwrap());
        let mid = BoundingBox::new(5.0, 0.0, 10.0, 3.5);
        assert!(tsg_keep(&mid, &small, 100.0, &cfg).unwrap());
        assert!(!tsg_keep(&small, &BoundingBox::new(5.0, 0.0, 10.0, 7.0), 100.0, &cfg).unwrap());
    }

    #[test]
    fn pruned_edges_are_zeroed_and_kept_edges_untouched() {
        let objs = boxes_at(
            EntityKind::Object,
            &[
                [0., 0., 30., 30.],
                [1., 1., 31., 31.],
                [60., 60., 90., 90.],
                [35., 0., 60., 25.],
            ],
        );
        let full = build_edges(&objs, &objs, true).unwrap();
        let pruned =
            prune_osg(&full, &objs, 100.0f64.hypot(100.0), &PruneConfig::default()).unwrap();
        assert!(!pruned.kept(0, 1) && !pruned.kept(1, 0));
        for s in 0..4 {
            for d in 0..4 {
                if pruned.kept(s, d) {
                    assert_eq!(pruned.feature(s, d), full.feature(s, d));
                } else {
                    assert_eq!(*pruned.feature(s, d), [0.0; EDGE_DIM]);
                }
            }
        }
    }

    #[test]
    fn sparsity_ratio_cases() {
        let objs = boxes_at(EntityKind::Object, &[[0., 0., 1., 1.], [2., 2., 3., 3.]]);
        let toks = boxes_at(
            EntityKind::Token,
            &[[0., 0., 1., 1.], [4., 4., 5., 5.], [1., 1., 2., 2.]],
        );
        let e = build_edges(&objs, &toks, false).unwrap();
        assert_eq!(sparsity_ratio(&e, &e).unwrap().ratio, 0.0);
        let none = e.retain(|_, _| Ok(false)).unwrap();
        assert_eq!(sparsity_ratio(&e, &none).unwrap().ratio, 1.0);

        // 4 x 5 candidates, prune 7 of them.
        let s = boxes_at(EntityKind::Object, &[[0., 0., 1., 1.]; 4]);
        let t = boxes_at(EntityKind::Token, &[[0., 0., 1., 1.]; 5]);
        let e = build_edges(&s, &t, false).unwrap();
        let mut n = 0;
        let cut = e
            .retain(|_, _| {
                n += 1;
                Ok(n > 7)
            })
            .unwrap();
        let st = sparsity_ratio(&e, &cut).unwrap();
        assert_eq!((st.total, st.pruned), (20, 7));
        assert_eq!(st.ratio, 0.35);

        let empty = build_edges(&objs[..1], &objs[..1], true).unwrap();
        let st = sparsity_ratio(&empty, &empty).unwrap();
        assert_eq!((st.total, st.ratio), (0, 0.0));
        assert!(sparsity_ratio(&e, &none).is_err());
    }

    fn fixture_scene() -> Scene {
        let mut objects = boxes_at(
            EntityKind::Object,
            &[
                [10., 10., 60., 60.],
                [11., 11., 61., 61.],
                [200., 150., 260., 210.],
            ],
        );
        let mut tokens = boxes_at(
            EntityKind::Token,
            &[
                [20., 25., 50., 40.],
                [205., 170., 250., 185.],
                [500., 400., 530., 412.],
            ],
        );
        for (i, t) in tokens.iter_mut().enumerate() {
            t.id = 10 + i as u32;
            t.label = format!("w\"{i}");
        }
        objects[2].label = "sign".into();
        Scene {
            image_width: 640.0,
            image_height: 480.0,
            objects,
            tokens,
            examples: vec![],
        }
    }

    #[test]
    fn export_json_round_trips_keep_masks() {
        let scene = fixture_scene();
        let g =
            SceneGraph::build(&scene, &PruneConfig::default(), SparsityToggles::default()).unwrap();
        let bytes = export_graph(&scene, &g, &GraphKind::ALL, ExportFormat::Json);
        let parsed: GraphExport = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(parsed.nodes.len(), 6);
        assert_eq!(
            keep_mask_from_export(&parsed, GraphKind::Osg, &scene.objects, &scene.objects),
            g.v2v.keep_mask()
        );
        assert_eq!(
            keep_mask_from_export(&parsed, GraphKind::Tsg, &scene.tokens, &scene.tokens),
            g.t2t.keep_mask()
        );
        assert_eq!(
            keep_mask_from_export(&parsed, GraphKind::Otsg, &scene.tokens, &scene.objects),
            g.t2v.keep_mask()
        );
        assert_eq!(
            keep_mask_from_export(&parsed, GraphKind::Otsg, &scene.objects, &scene.tokens),
            g.v2t.keep_mask()
        );
    }

    #[test]
    fn export_with_no_edges_keeps_nodes() {
        let scene = fixture_scene();
        let mut g =
            SceneGraph::build(&scene, &PruneConfig::default(), SparsityToggles::default()).unwrap();
        for set in [&mut g.t2v, &mut g.v2t, &mut g.v2v, &mut g.t2t] {
            *set = set.retain(|_, _| Ok(false)).unwrap();
        }
        let parsed: GraphExport = serde_json::from_slice(&export_graph(
            &scene,
            &g,
            &GraphKind::ALL,
            ExportFormat::Json,
        ))
        .unwrap();
        assert_eq!(parsed.nodes.len(), 6);
        assert!(parsed.edges.is_empty());
    }

    #[test]
    fn dot_export_shapes_and_escaping() {
        let scene = fixture_scene();
        let g =
            SceneGraph::build(&scene, &PruneConfig::default(), SparsityToggles::default()).unwrap();
        let dot = String::from_utf8(export_graph(
            &scene,
            &g,
            &[GraphKind::Osg],
            ExportFormat::Dot,
        ))
        .unwrap();
        assert!(dot.starts_with("digraph scene {\n") && dot.ends_with("}\n"));
        assert!(dot.contains("n0 [label=\"e0\", shape=box];"));
        assert!(dot.contains("n10 [label=\"w\\\"0\", shape=ellipse];"));
        assert!(!dot.contains("n0 -> n1 "), "duplicate pair is pruned");
        assert!("xml".parse::<ExportFormat>().is_err());
    }

    #[test]
    fn duplicate_pair_drives_osg_ratio() {
        let scene = fixture_scene();
        let g =
            SceneGraph::build(&scene, &PruneConfig::default(), SparsityToggles::default()).unwrap();
        assert!(g.stats(GraphKind::Osg).ratio > 0.0);
        let off = SparsityToggles {
            osg: false,
            ..SparsityToggles::default()
        };
        let g = SceneGraph::build(&scene, &PruneConfig::default(), off).unwrap();
        assert_eq!(g.stats(GraphKind::Osg).ratio, 0.0);
    }

    #[test]
    fn prune_config_validation() {
        assert!(PruneConfig::default().validate().is_ok());
        assert!(PruneConfig {
            theta: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PruneConfig {
            beta: 3.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PruneConfig {
            alpha: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
