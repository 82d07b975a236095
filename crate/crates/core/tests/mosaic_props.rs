mod common;

use polarkit::mosaic::{
    load_raw, save_raw, saturation_mask, split_planes, Angle, MosaicLayout, RawMosaicImage,
};
use proptest::prelude::*;

fn arb_layout() -> impl Strategy<Value = MosaicLayout> {
    Just(Angle::ALL.to_vec()).prop_shuffle().prop_map(|a| {
        MosaicLayout::new([[a[0], a[1]], [a[2], a[3]]]).expect("permutation is a valid layout")
    })
}

prop_compose! {
    fn arb_raw()(sw in 1usize..8, sh in 1usize..8, sixteen in any::<bool>(), layout in arb_layout())
        (pixels in prop::collection::vec(
            if sixteen { 0u16..=u16::MAX } else { 0u16..=255 }, sw * sh * 16),
         sw in Just(sw), sh in Just(sh), sixteen in Just(sixteen), layout in Just(layout))
        -> RawMosaicImage {
        RawMosaicImage::new(4 * sw, 4 * sh, if sixteen { 16 } else { 8 }, pixels, layout).unwrap()
    }
}

proptest! {
    #[test]
    fn split_then_reassemble_is_identity(raw in arb_raw()) {
        let back = split_planes(&raw).reassemble(raw.layout()).unwrap();
        prop_assert_eq!(back, raw);
    }

    #[test]
    fn planes_hold_the_right_offsets(raw in arb_raw()) {
        let planes = split_planes(&raw);
        for angle in Angle::ALL {
            let (dr, dc) = raw.layout().offset_of(angle);
            let p = planes.plane(angle);
            for y in 0..p.height() {
                for x in 0..p.width() {
                    prop_assert_eq!(p.get(x, y), raw.get(2 * x + dc, 2 * y + dr));
                }
            }
        }
    }

    #[test]
    fn crop_commutes_with_split(raw in arb_raw(), a in 0usize..8, b in 0usize..8) {
        let (sw, sh) = (raw.width() / 4, raw.height() / 4);
        let (cx, cy) = (a % sw, b % sh);
        let (cw, ch) = (sw - cx, sh - cy);
        let cropped = raw.crop_superpixels(4 * cx, 4 * cy, 4 * cw, 4 * ch).unwrap();
        let left = split_planes(&cropped);
        let right = split_planes(&raw);
        for angle in Angle::ALL {
            let expect = right.plane(angle).crop(2 * cx, 2 * cy, 2 * cw, 2 * ch).unwrap();
            prop_assert_eq!(left.plane(angle), &expect);
        }
    }

    #[test]
    fn pgm_round_trip(raw in arb_raw()) {
        let back = RawMosaicImage::from_pgm_bytes(&raw.to_pgm_bytes(), raw.layout()).unwrap();
        prop_assert_eq!(back, raw);
    }

    #[test]
    fn saturation_matches_brute_force(raw in arb_raw(), hits in prop::collection::vec((0usize..64, 0usize..64), 0..6)) {
        let full = raw.max_code();
        let mut px = raw.pixels().to_vec();
        for (x, y) in hits {
            let (x, y) = (x % raw.width(), y % raw.height());
            px[y * raw.width() + x] = full;
        }
        let raw = RawMosaicImage::new(raw.width(), raw.height(), raw.bit_depth(), px, raw.layout()).unwrap();
        prop_assert_eq!(saturation_mask(&raw), common::brute_force_saturation(&raw));
    }
}

#[test]
fn file_round_trip_and_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let px: Vec<u16> = (0..64).map(|i| i * 1000).collect();
    let raw = RawMosaicImage::new(8, 8, 16, px, MosaicLayout::default()).unwrap();
    let path = dir.path().join("f.pgm");
    save_raw(&raw, &path).unwrap();
    assert_eq!(load_raw(&path, None).unwrap(), raw);

    assert!(RawMosaicImage::new(6, 8, 8, vec![0; 48], MosaicLayout::default()).is_err());
    assert!(RawMosaicImage::new(7, 8, 8, vec![0; 56], MosaicLayout::default()).is_err());
    assert!(RawMosaicImage::new(8, 8, 8, vec![256; 64], MosaicLayout::default()).is_err());
    assert!(RawMosaicImage::new(8, 8, 12, vec![0; 64], MosaicLayout::default()).is_err());
}

#[test]
fn sensor_frame_splits_to_half_resolution() {
    let raw = RawMosaicImage::new(2448, 2048, 8, vec![7; 2448 * 2048], MosaicLayout::default())
        .unwrap();
    assert_eq!(split_planes(&raw).dims(), (1224, 1024));
}
