use lunareg::geowarp::{composite, integrate_coordinates, warp_onto, warp_perspective, CompositeMode};
use lunareg::matching::Homography;
use lunareg::{GeoMeta, GeoRaster, Kernel, Projection};
use proptest::prelude::*;

fn smooth_scene(w: usize, h: usize) -> GeoRaster {
    GeoRaster::from_fn_u8(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        (128.0 + 60.0 * (x / 23.0).sin() * (y / 31.0).cos() + 30.0 * ((x + y) / 47.0).sin()).round() as u8
    })
    .unwrap()
}

fn homography(angle: f64, scale: f64, tx: f64, ty: f64, p: f64, q: f64) -> Homography {
    let s = Homography::similarity(angle, scale, tx, ty).unwrap().rows();
    Homography::from_rows([s[0], s[1], [p, q, 1.0]]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn footprint_is_the_corner_bounding_box(
        angle in -0.6f64..0.6,
        scale in 0.6f64..1.6,
        tx in -80.0f64..80.0,
        ty in -80.0f64..80.0,
        p in -4e-4f64..4e-4,
        q in -4e-4f64..4e-4,
    ) {
        let src = smooth_scene(48, 40);
        let h = homography(angle, scale, tx, ty, p, q);
        let out = warp_perspective(&src, &h, Kernel::Bilinear).unwrap();
        let corners = [(0.0, 0.0), (47.0, 0.0), (47.0, 39.0), (0.0, 39.0)].map(|(x, y)| h.apply(x, y));
        let min_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let max_x = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let max_y = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let (fx0, fy0, fx1, fy1) = out.footprint;
        prop_assert!((fx0 - min_x).abs() < 1e-6 && (fy0 - min_y).abs() < 1e-6);
        prop_assert!((fx1 - max_x).abs() < 1e-6 && (fy1 - max_y).abs() < 1e-6);
        let (ox, oy) = out.origin_offset;
        prop_assert!(ox as f64 <= min_x + 1e-9 && oy as f64 <= min_y + 1e-9);
        prop_assert!((ox + out.image.width() as i64 - 1) as f64 >= max_x - 1e-9);
        prop_assert!((oy + out.image.height() as i64 - 1) as f64 >= max_y - 1e-9);
    }

    #[test]
    fn composite_covers_both_extents(tx in -30i32..30, ty in -30i32..30, mode in 0usize..3) {
        let src = smooth_scene(32, 24);
        let reference = smooth_scene(40, 36);
        let warped = warp_perspective(&src, &Homography::translation(tx as f64, ty as f64), Kernel::Nearest).unwrap();
        let mode = [CompositeMode::Overlay, CompositeMode::Blend, CompositeMode::Checker][mode];
        let (canvas, (cx, cy)) = composite(&warped, &reference, mode).unwrap();
        let (wx, wy) = warped.origin_offset;
        prop_assert!(cx <= 0 && cy <= 0 && cx <= wx && cy <= wy);
        prop_assert!(cx + canvas.width() as i64 >= 40 && cy + canvas.height() as i64 >= 36);
        prop_assert!(cx + canvas.width() as i64 >= wx + warped.image.width() as i64);
        prop_assert!(cy + canvas.height() as i64 >= wy + warped.image.height() as i64);
        prop_assert!(canvas.band(0).iter().all(|v| (0.0..=255.0).contains(v)));
    }
}

#[test]
fn forward_then_inverse_returns_the_image() {
    let src = smooth_scene(96, 80);
    let h = homography(0.12, 1.1, 7.5, -4.25, 1e-4, -5e-5);
    let fwd = warp_perspective(&src, &h, Kernel::Bicubic).unwrap();
    let (ox, oy) = fwd.origin_offset;
    let to_canvas = Homography::translation(-ox as f64, -oy as f64).compose(&h).unwrap();
    let back = warp_onto(
        &fwd.image,
        &to_canvas.inverse().unwrap(),
        Kernel::Bicubic,
        (0, 0),
        96,
        80,
    )
    .unwrap();
    let mut worst = 0.0f32;
    for y in 6..74 {
        for x in 6..90 {
            let i = y * 96 + x;
            assert!(back.image.is_valid(i), "({x},{y}) masked");
            worst = worst.max((back.image.band(0)[i] - src.band(0)[i]).abs());
        }
    }
    assert!(worst <= 3.0, "round trip moved a pixel by {worst}");
}

#[test]
fn integration_without_restore_keeps_pixels() {
    let src = smooth_scene(30, 20);
    let meta = GeoMeta::north_up(Projection::Equirectangular, (5000.0, 9000.0), 2.0).unwrap();
    let warped = warp_perspective(&src, &Homography::translation(-3.0, 4.0), Kernel::Bilinear).unwrap();
    let out = integrate_coordinates(&warped, &meta, false).unwrap();
    assert_eq!(out.bands(), warped.image.bands());
    assert_eq!(out.mask(), warped.image.mask());
    let gt = out.meta().unwrap().geotransform;
    assert_eq!((gt[0], gt[3]), (5000.0 - 3.0 * 2.0, 9000.0 - 4.0 * 2.0));
}

#[test]
fn restore_without_source_metadata_is_an_error() {
    let src = smooth_scene(10, 10);
    let meta = GeoMeta::north_up(Projection::Equirectangular, (0.0, 0.0), 1.0).unwrap();
    let warped = warp_perspective(&src, &Homography::identity(), Kernel::Nearest).unwrap();
    assert!(matches!(
        integrate_coordinates(&warped, &meta, true),
        Err(lunareg::Error::MissingGeoMeta)
    ));
}
