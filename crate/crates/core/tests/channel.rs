mod common;

use common::*;
use irs_planner::channel::{array_response, synthesize_channel, ArrayGeom, ChannelError, ChannelSet, Target};
use irs_planner::ckm::{PathKind, PathRecord};
use irs_planner::scene::Vec3;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_vec() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("non-zero", |v| Vec3::from(*v).norm() > 1e-3)
        .prop_map(|v| Vec3::from(v).normalize())
}

#[test]
fn single_path_channel_is_rank_one() {
    let rec = PathRecord {
        kind: PathKind::LoS,
        length: 3.0,
        gain: Complex64::from_polar(1e-3, 0.7),
        aod: Vec3::new(0.6, 0.8, 0.0),
        aoa: Vec3::new(-0.6, -0.8, 0.0),
        bounce: None,
    };
    let tx = ArrayGeom::new(Vec3::y(), 4, 0.5);
    let rx = ArrayGeom::new(Vec3::x(), 3, 0.5);
    let h = synthesize_channel(&[rec.clone()], &tx, &rx).unwrap();
    assert_eq!(h.shape(), (3, 4));
    let sv = h.clone().singular_values();
    assert!((sv[0] - 1e-3 * 12f64.sqrt()).abs() < 1e-15);
    assert!(sv[1] < 1e-18);
    assert_eq!(synthesize_channel(&[], &tx, &rx).unwrap(), h * Complex64::from(0.0));
}

#[test]
fn dimension_errors() {
    assert!(ChannelSet::new(vec![], vec![], vec![], vec![]).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let good = random_channels(&mut rng, 2, 3, 2, 1, 1, 0.1);
    let mut gkp = good.gkp.clone();
    gkp[1][0] = cvec(&mut rng, 4, 1.0);
    assert!(matches!(
        ChannelSet::new(good.h0k.clone(), good.h0q.clone(), good.hkq.clone(), gkp),
        Err(ChannelError::Dimension(_))
    ));
    let mut h0q = good.h0q.clone();
    h0q[0][0] = Complex64::new(f64::NAN, 0.0);
    assert!(matches!(
        ChannelSet::new(good.h0k.clone(), h0q, good.hkq.clone(), good.gkp.clone()),
        Err(ChannelError::NonFinite("h0q"))
    ));
}

#[test]
fn sensing_uses_line_of_sight_only() {
    // Pairs with only reflected records give a zero sensing channel.
    let d = desk(0);
    let ckm = irs_planner::ckm::build_ckm(&d.scene, &d.points).unwrap();
    for k in 0..d.channels.num_sites() {
        for p in 0..d.channels.num_sp() {
            let recs = ckm.paths(irs_planner::ckm::EndpointId::Site(k), irs_planner::ckm::EndpointId::Sp(p)).unwrap();
            if recs.iter().all(|r| r.kind != PathKind::LoS) {
                assert!(d.channels.gkp[k][p].iter().all(|z| *z == Complex64::from(0.0)));
            }
        }
    }
}

proptest! {
    #[test]
    fn array_response_is_unit_modulus(dir in unit_vec(), axis in unit_vec(), n in 1usize..16, spacing in 0.1f64..1.0) {
        let a = array_response(&dir, &axis, n, spacing).unwrap();
        prop_assert_eq!(a.len(), n);
        prop_assert!((a[0] - Complex64::new(1.0, 0.0)).norm() == 0.0);
        for z in a.iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_channel_is_affine_in_beta(seed in any::<u64>(), b1 in prop::collection::vec(0.0f64..1.0, 3), b2 in prop::collection::vec(0.0f64..1.0, 3), t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channels(&mut rng, 3, 2, 2, 2, 2, 0.5);
        let v = unit_phases(&mut rng, 6);
        let mix: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        for target in ch.targets() {
            let lhs = ch.effective(&mix, &v, target);
            let rhs = ch.effective(&b1, &v, target) * Complex64::from(1.0 - t) + ch.effective(&b2, &v, target) * Complex64::from(t);
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }
        let zero = ch.effective(&[0.0; 3], &v, Target::Sp(0));
        prop_assert!(zero.norm() == 0.0);
        prop_assert_eq!(ch.effective(&[0.0; 3], &v, Target::Cp(1)), ch.h0q[1].clone());
    }
}
