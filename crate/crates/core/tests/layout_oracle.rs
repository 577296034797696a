use std::collections::BTreeMap;
use std::f64::consts::TAU;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topicfield::layout::{self, step, Velocities};
use topicfield::topic_model::ModelParts;
use topicfield::{
    magnet_radius, project, renormalized_theta, ring_position, run_to_convergence, synth_model, Bounds, Corpus, Document,
    DocumentId, FieldState, LayoutParams, NodeRef, Point, TopicId, TopicModel,
};

fn doc(i: usize) -> DocumentId {
    DocumentId::new(format!("d{i}"))
}

fn model_from_theta(rows: &[Vec<f64>]) -> TopicModel {
    let t = rows[0].len();
    let theta = Array2::from_shape_fn((rows.len(), t), |(d, i)| rows[d][i]);
    TopicModel::from_parts(ModelParts {
        vocabulary: (0..t).map(|i| format!("w{i}")).collect(),
        document_ids: (0..rows.len()).map(doc).collect(),
        beta: Array2::eye(t),
        theta,
        labels: None,
    })
    .unwrap()
}

fn corpus_for(model: &TopicModel) -> Corpus {
    Corpus::from_documents(model.document_ids().iter().map(|id| Document {
        id: id.clone(),
        title: id.to_string(),
        authors: vec![],
        year: None,
        venue: None,
        body: id.to_string(),
        cites: Default::default(),
    }))
}

struct Setup {
    docs: Vec<(usize, Point, bool)>,
    magnets: Vec<(usize, Point, bool)>,
}

fn build_field(model: &TopicModel, setup: &Setup) -> FieldState {
    let corpus = corpus_for(model);
    let mut field = FieldState::new(Bounds::new(100.0, 100.0));
    field.set_topic_settings(model, false, 7).unwrap();
    let ids: Vec<DocumentId> = setup.docs.iter().map(|(i, _, _)| doc(*i)).collect();
    field.add_documents(&corpus, model, &ids).unwrap();
    for (i, p, pinned) in &setup.docs {
        let r = NodeRef::Document(doc(*i));
        field.move_node(&r, *p).unwrap();
        field.set_pin(&r, *pinned).unwrap();
    }
    for (t, p, pinned) in &setup.magnets {
        field.add_topic(model, TopicId(*t)).unwrap();
        let r = NodeRef::Topic(TopicId(*t));
        field.move_node(&r, *p).unwrap();
        field.set_pin(&r, *pinned).unwrap();
    }
    field
}

fn final_positions(field: &FieldState, model: &TopicModel, params: &LayoutParams) -> (usize, BTreeMap<NodeRef, Point>) {
    let frames = run_to_convergence(field, model, params).unwrap();
    (frames.len(), frames.last().unwrap().positions.clone())
}

#[test]
fn renormalized_theta_examples() {
    let m = model_from_theta(&[vec![0.3, 0.1, 0.6], vec![0.0, 0.0, 1.0]]);
    let all: Vec<TopicId> = (0..3).map(TopicId).collect();
    let w = renormalized_theta(&m, &doc(0), &all).unwrap();
    assert_eq!(w, vec![0.3, 0.1, 0.6]);
    let w = renormalized_theta(&m, &doc(0), &[TopicId(0), TopicId(1)]).unwrap();
    assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
    let w = renormalized_theta(&m, &doc(1), &[TopicId(0), TopicId(1)]).unwrap();
    assert_eq!(w, vec![0.5, 0.5]);
}

#[test]
fn renormalized_theta_random_subsets() {
    let m = synth_model(3, 20, 12, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 0..20 {
        let mut subset: Vec<usize> = (0..12).collect();
        for i in 0..4 {
            let j = rng.random_range(i..12);
            subset.swap(i, j);
        }
        let topics: Vec<TopicId> = subset[..4].iter().map(|&t| TopicId(t)).collect();
        let w = renormalized_theta(&m, &doc(d), &topics).unwrap();
        let denom: f64 = subset[..4].iter().map(|&t| m.theta()[[d, t]]).sum();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (k, &t) in subset[..4].iter().enumerate() {
            assert_eq!(w[k], m.theta()[[d, t]] / denom);
        }
    }
}

#[test]
fn projection_examples() {
    let m = model_from_theta(&[vec![1.0, 0.0], vec![0.5, 0.5], vec![0.7, 0.3]]);
    let magnets = BTreeMap::from([(TopicId(0), Point::new(0.0, 0.0)), (TopicId(1), Point::new(10.0, 0.0))]);
    let one = BTreeMap::from([(TopicId(0), Point::new(3.25, -7.5)), (TopicId(1), Point::new(10.0, 0.0))]);
    assert_eq!(project(&m, &doc(0), &one).unwrap(), Point::new(3.25, -7.5));
    assert_eq!(project(&m, &doc(1), &magnets).unwrap(), Point::new(5.0, 0.0));
    let p = project(&m, &doc(2), &magnets).unwrap();
    assert!((p.x - 3.0).abs() < 1e-12 && p.y == 0.0);
    let bad = BTreeMap::from([(TopicId(0), Point::new(f64::NAN, 0.0))]);
    assert!(project(&m, &doc(0), &bad).is_err());
    assert!(project(&m, &doc(0), &BTreeMap::new()).is_err());
}

#[test]
fn magnet_radius_is_linear() {
    assert_eq!(magnet_radius(0.4, 0.4), 28.0);
    assert_eq!(magnet_radius(0.0, 0.4), 8.0);
    assert!((magnet_radius(0.2, 0.4) - 18.0).abs() < 1e-12);
    assert_eq!(magnet_radius(0.0, 0.0), 8.0);
}

#[test]
fn ring_positions() {
    let b = Bounds::new(200.0, 100.0);
    let r = 45.0;
    let top = ring_position(0, 1, b);
    assert!((top.x - 100.0).abs() < 1e-9 && (top.y - 5.0).abs() < 1e-9);
    let expect = [(100.0, 50.0 - r), (100.0 + r, 50.0), (100.0, 50.0 + r), (100.0 - r, 50.0)];
    for (slot, (x, y)) in expect.into_iter().enumerate() {
        let p = ring_position(slot, 4, b);
        assert!((p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9, "slot {slot}: {p:?}");
    }
    let c = b.center();
    let angles: Vec<f64> = (0..7)
        .map(|s| {
            let p = ring_position(s, 7, b);
            assert!(((p - c).norm() - r).abs() < 1e-9);
            // clockwise on screen from the top
            (p.x - c.x).atan2(c.y - p.y).rem_euclid(TAU)
        })
        .collect();
    for s in 0..7 {
        let gap = (angles[(s + 1) % 7] - angles[s]).rem_euclid(TAU);
        assert!((gap - TAU / 7.0).abs() < 1e-9);
    }
}

#[test]
fn all_pinned_does_not_move() {
    let m = model_from_theta(&[vec![0.5, 0.5]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(40.0, 40.0), true)],
            magnets: vec![(0, Point::new(0.0, 0.0), true), (1, Point::new(10.0, 0.0), true)],
        },
    );
    let frames = run_to_convergence(&f, &m, &LayoutParams::default()).unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].max_displacement, 0.0);
    assert_eq!(frames[0].positions[&NodeRef::Document(doc(0))], Point::new(40.0, 40.0));
}

#[test]
fn single_spring_points_at_the_magnet() {
    let m = model_from_theta(&[vec![1.0]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(10.0, 20.0), false)],
            magnets: vec![(0, Point::new(40.0, 60.0), true)],
        },
    );
    let mut v = Velocities::default();
    let frame = step(&f, &m, &LayoutParams::default(), &mut v).unwrap();
    let moved = frame.positions[&NodeRef::Document(doc(0))] - Point::new(10.0, 20.0);
    let toward = Point::new(30.0, 40.0);
    let cross = moved.x * toward.y - moved.y * toward.x;
    assert!(cross.abs() < 1e-12 && moved.x > 0.0 && moved.y > 0.0);
}

/// Independent scalar integrator for one step.
#[allow(clippy::too_many_arguments)]
#[allow(clippy::needless_range_loop)]
fn scalar_step(
    theta: &[[f64; 3]],
    docs: &[(f64, f64, bool)],
    magnets: &[(f64, f64, bool)],
    vel: &[(f64, f64)],
    k: f64,
    c: f64,
    dt: f64,
    rep: f64,
) -> Vec<(f64, f64)> {
    let nd = docs.len();
    let nt = magnets.len();
    let mut w = vec![vec![0.0; nt]; nd];
    for d in 0..nd {
        let s: f64 = theta[d].iter().sum();
        for i in 0..nt {
            w[d][i] = theta[d][i] / s;
        }
    }
    let mut out = Vec::new();
    for d in 0..nd {
        let (x, y, pinned) = docs[d];
        if pinned {
            out.push((x, y));
            continue;
        }
        let mut fx = 0.0;
        let mut fy = 0.0;
        for i in 0..nt {
            fx += k * w[d][i] * (magnets[i].0 - x);
            fy += k * w[d][i] * (magnets[i].1 - y);
        }
        for e in 0..nd {
            if e == d {
                continue;
            }
            let dx = x - docs[e].0;
            let dy = y - docs[e].1;
            let r = (dx * dx + dy * dy).sqrt().max(1e-6);
            fx += rep * dx / (r * r * r);
            fy += rep * dy / (r * r * r);
        }
        let vx = c * (vel[d].0 + dt * fx);
        let vy = c * (vel[d].1 + dt * fy);
        out.push((x + dt * vx, y + dt * vy));
    }
    for i in 0..nt {
        let (x, y, pinned) = magnets[i];
        if pinned {
            out.push((x, y));
            continue;
        }
        let mut fx = 0.0;
        let mut fy = 0.0;
        let mut mass = 0.0;
        for d in 0..nd {
            fx += k * w[d][i] * (docs[d].0 - x);
            fy += k * w[d][i] * (docs[d].1 - y);
            mass += w[d][i];
        }
        let vx = c * (vel[nd + i].0 + dt * fx / mass);
        let vy = c * (vel[nd + i].1 + dt * fy / mass);
        out.push((x + dt * vx, y + dt * vy));
    }
    out
}

#[test]
fn one_step_matches_scalar_integrator() {
    let theta = [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]];
    let m = model_from_theta(&theta.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    let docs = [(12.0, 30.0, false), (55.5, 41.0, false), (20.0, 80.0, true)];
    let magnets = [(0.0, 0.0, true), (90.0, 10.0, false), (50.0, 95.0, true)];
    let vel = [(0.5, -1.0), (0.0, 2.0), (0.0, 0.0), (0.0, 0.0), (-3.0, 1.5), (0.0, 0.0)];
    let params = LayoutParams {
        stiffness: 1.7,
        damping: 0.8,
        dt: 0.05,
        repulsion: 25.0,
        ..LayoutParams::default()
    };
    let f = build_field(
        &m,
        &Setup {
            docs: docs.iter().enumerate().map(|(i, (x, y, p))| (i, Point::new(*x, *y), *p)).collect(),
            magnets: magnets.iter().enumerate().map(|(i, (x, y, p))| (i, Point::new(*x, *y), *p)).collect(),
        },
    );
    let mut refs: Vec<NodeRef> = (0..3).map(|i| NodeRef::Document(doc(i))).collect();
    refs.extend((0..3).map(|t| NodeRef::Topic(TopicId(t))));
    let mut velocities = Velocities(refs.iter().cloned().zip(vel.iter().map(|(x, y)| Point::new(*x, *y))).collect());
    let frame = step(&f, &m, &params, &mut velocities).unwrap();
    let expected = scalar_step(&theta, &docs, &magnets, &vel, 1.7, 0.8, 0.05, 25.0);
    let mut max_disp: f64 = 0.0;
    for (r, (ex, ey)) in refs.iter().zip(&expected) {
        let p = frame.positions[r];
        assert!((p.x - ex).abs() < 1e-12 && (p.y - ey).abs() < 1e-12, "{r}: {p:?} vs ({ex}, {ey})");
        let before = f.node(r).unwrap().position;
        max_disp = max_disp.max((p - before).norm());
    }
    assert!((frame.max_displacement - max_disp).abs() < 1e-12);
}

#[test]
fn halfway_between_two_magnets() {
    let m = model_from_theta(&[vec![0.5, 0.5]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(50.0, 50.0), false)],
            magnets: vec![(0, Point::new(0.0, 0.0), true), (1, Point::new(10.0, 0.0), true)],
        },
    );
    let (_, pos) = final_positions(&f, &m, &LayoutParams::default());
    assert!(pos[&NodeRef::Document(doc(0))].distance(Point::new(5.0, 0.0)) < 1e-3);
}

#[test]
fn converged_field_takes_one_frame() {
    let m = model_from_theta(&[vec![0.5, 0.5]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(5.0, 0.0), false)],
            magnets: vec![(0, Point::new(0.0, 0.0), true), (1, Point::new(10.0, 0.0), true)],
        },
    );
    assert_eq!(run_to_convergence(&f, &m, &LayoutParams::default()).unwrap().len(), 1);
}

#[test]
fn no_magnets_means_no_motion() {
    let m = model_from_theta(&[vec![0.5, 0.5], vec![0.1, 0.9]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(5.0, 0.0), false), (1, Point::new(7.0, 3.0), false)],
            magnets: vec![],
        },
    );
    let frames = run_to_convergence(&f, &m, &LayoutParams::default()).unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].positions[&NodeRef::Document(doc(1))], Point::new(7.0, 3.0));
}

fn random_setup(rng: &mut ChaCha8Rng, docs: usize, topics: usize, docs_pinned: bool) -> (TopicModel, Setup) {
    let model = synth_model(rng.random(), docs, topics, 5).unwrap();
    let mut p = || Point::new(rng.random_range(0.0..800.0), rng.random_range(0.0..600.0));
    let setup = Setup {
        docs: (0..docs).map(|d| (d, p(), docs_pinned)).collect(),
        magnets: (0..topics).map(|t| (t, p(), !docs_pinned)).collect(),
    };
    (model, setup)
}

#[test]
fn barycentric_equilibrium_for_fifty_documents() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (m, setup) = random_setup(&mut rng, 50, 5, false);
    let f = build_field(&m, &setup);
    let params = LayoutParams::default();
    let (steps, pos) = final_positions(&f, &m, &params);
    assert!(steps < params.max_steps);
    let magnets = f.topic_positions();
    for d in 0..50 {
        let expected = project(&m, &doc(d), &magnets).unwrap();
        assert!(pos[&NodeRef::Document(doc(d))].distance(expected) < 1e-3);
    }
}

#[test]
fn floating_magnets_settle_at_weighted_document_barycenters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (m, mut setup) = random_setup(&mut rng, 30, 5, true);
    // Three piles of ten documents.
    for (d, p, _) in setup.docs.iter_mut() {
        *p = [Point::new(100.0, 100.0), Point::new(700.0, 120.0), Point::new(400.0, 500.0)][*d % 3];
    }
    let f = build_field(&m, &setup);
    let (_, pos) = final_positions(&f, &m, &LayoutParams::default());
    let topics: Vec<TopicId> = (0..5).map(TopicId).collect();
    for (k, t) in topics.iter().enumerate() {
        let mut num = Point::ORIGIN;
        let mut den = 0.0;
        for (d, p, _) in &setup.docs {
            let w = renormalized_theta(&m, &doc(*d), &topics).unwrap()[k];
            num += *p * w;
            den += w;
        }
        assert!(pos[&NodeRef::Topic(*t)].distance(num * (1.0 / den)) < 1e-3);
    }
}

#[test]
fn lone_floating_magnet_lands_on_its_document() {
    let m = model_from_theta(&[vec![1.0, 0.0]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(123.0, 45.0), true)],
            magnets: vec![(0, Point::new(0.0, 0.0), false)],
        },
    );
    let (_, pos) = final_positions(&f, &m, &LayoutParams::default());
    assert!(pos[&NodeRef::Topic(TopicId(0))].distance(Point::new(123.0, 45.0)) < 1e-3);
}

#[test]
fn spectrum_is_monotone_in_right_weight() {
    let rows: Vec<Vec<f64>> = (0..30).map(|i| {
        let right = (i as f64 + 0.5) / 30.0;
        vec![1.0 - right, right]
    }).collect();
    let m = model_from_theta(&rows);
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let setup = Setup {
        docs: (0..30).map(|d| (d, Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)), false)).collect(),
        magnets: vec![(0, Point::new(-10.0, 0.0), true), (1, Point::new(10.0, 0.0), true)],
    };
    let f = build_field(&m, &setup);
    let (_, pos) = final_positions(&f, &m, &LayoutParams::default());
    let xs: Vec<f64> = (0..30).map(|d| pos[&NodeRef::Document(doc(d))].x).collect();
    assert!(xs.windows(2).all(|w| w[0] < w[1]), "{xs:?}");
}

#[test]
fn pinned_positions_fixed_in_every_frame_and_displacement_settles() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (m, mut setup) = random_setup(&mut rng, 20, 6, false);
    setup.docs[3].2 = true;
    setup.magnets[2].2 = false;
    let f = build_field(&m, &setup);
    let frames = run_to_convergence(&f, &m, &LayoutParams::default()).unwrap();
    assert!(frames.len() < LayoutParams::default().max_steps);
    for frame in &frames {
        for (r, n) in f.nodes().filter(|(_, n)| n.pinned) {
            assert_eq!(frame.positions[&r], n.position);
        }
    }
    // After the initial transient the displacement only shrinks.
    let tail = &frames[frames.len() / 2..];
    assert!(tail.windows(2).all(|w| w[1].max_displacement <= w[0].max_displacement * (1.0 + 1e-9)));
}

#[test]
fn repulsion_separates_coincident_documents() {
    let m = model_from_theta(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(4.0, 1.0), false), (1, Point::new(6.0, -1.0), false)],
            magnets: vec![(0, Point::new(0.0, 0.0), true), (1, Point::new(10.0, 0.0), true)],
        },
    );
    let params = LayoutParams { repulsion: 10.0, ..LayoutParams::default() };
    let (_, pos) = final_positions(&f, &m, &params);
    let a = pos[&NodeRef::Document(doc(0))];
    let b = pos[&NodeRef::Document(doc(1))];
    assert!(a.distance(b) > 1.0);
    assert!((a + b) .distance(Point::new(10.0, 0.0)) < 1e-2);
}

#[test]
fn invalid_params_are_rejected() {
    let m = model_from_theta(&[vec![1.0]]);
    let f = FieldState::default();
    for bad in [
        LayoutParams { damping: 0.0, ..Default::default() },
        LayoutParams { dt: -1.0, ..Default::default() },
        LayoutParams { stiffness: 0.0, ..Default::default() },
        LayoutParams { repulsion: -1.0, ..Default::default() },
        LayoutParams { max_steps: 0, ..Default::default() },
    ] {
        assert!(run_to_convergence(&f, &m, &bad).is_err());
    }
}

#[test]
fn divergence_is_reported() {
    let m = model_from_theta(&[vec![1.0]]);
    let f = build_field(
        &m,
        &Setup {
            docs: vec![(0, Point::new(1e300, 1e300), false)],
            magnets: vec![(0, Point::new(-1e300, -1e300), true)],
        },
    );
    let params = LayoutParams { dt: 10.0, damping: 1.0, ..Default::default() };
    let err = layout::run_to_convergence(&f, &m, &params).unwrap_err();
    assert!(matches!(err, layout::LayoutError::NonFinite { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn translation_equivariance(seed in any::<u64>(), tx in -500.0f64..500.0, ty in -500.0f64..500.0, docs_pinned in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, setup) = random_setup(&mut rng, 12, 4, docs_pinned);
        let t = Point::new(tx, ty);
        let shifted = Setup {
            docs: setup.docs.iter().map(|(d, p, pin)| (*d, *p + t, *pin)).collect(),
            magnets: setup.magnets.iter().map(|(i, p, pin)| (*i, *p + t, *pin)).collect(),
        };
        let params = LayoutParams::default();
        let (_, a) = final_positions(&build_field(&m, &setup), &m, &params);
        let (_, b) = final_positions(&build_field(&m, &shifted), &m, &params);
        for (r, p) in &a {
            prop_assert!((b[r] - (*p + t)).norm() < 1e-6);
        }
    }

    #[test]
    fn barycentric_equilibrium_holds(seed in any::<u64>(), docs in 1usize..40, topics in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, setup) = random_setup(&mut rng, docs, topics, false);
        let f = build_field(&m, &setup);
        let (_, pos) = final_positions(&f, &m, &LayoutParams::default());
        let magnets = f.topic_positions();
        for d in 0..docs {
            let expected = project(&m, &doc(d), &magnets).unwrap();
            prop_assert!(pos[&NodeRef::Document(doc(d))].distance(expected) < 1e-3);
        }
    }
}
