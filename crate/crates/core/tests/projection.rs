use dentseg::image::GrayImage;
use dentseg::phantom::{generate, PhantomSpec};
use dentseg::projection::*;
use proptest::prelude::*;

fn naive_projection(img: &GrayImage) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.width());
    for x in 0..img.width() {
        let mut acc = 0.0;
        for y in 0..img.height() {
            acc += img.get(x, y);
        }
        out.push(acc);
    }
    out
}

fn arb_image(max_w: usize, max_h: usize) -> impl Strategy<Value = GrayImage> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0..=255.0f64, w * h)
            .prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

fn arb_profile() -> impl Strategy<Value = ProjectionProfile> {
    prop::collection::vec(0u32..50, 3..200).prop_map(|v| {
        let n = v.len();
        ProjectionProfile {
            values: v.into_iter().map(f64::from).collect(),
            source_width: n,
            source_height: 1,
        }
    })
}

fn clean(tooth_count: usize, width: usize) -> PhantomSpec {
    PhantomSpec {
        width,
        height: 700,
        tooth_count,
        canal_teeth: vec![],
        noise_sigma: 0.0,
        ..PhantomSpec::default()
    }
}

#[test]
fn dark_gap_is_the_profile_minimum() {
    // two teeth of a 200-wide film meet at column 100
    let mut spec = clean(2, 200);
    spec.gap_width = 8.0;
    let (img, truth) = generate(&spec).unwrap();
    assert_eq!(truth.gap_centers[0], 100.0);
    let p = vertical_projection(&img);
    // a flat-bottomed gap gives a run of equal minima; take its centre
    let interior = &p.values[20..180];
    let lowest = interior.iter().copied().fold(f64::INFINITY, f64::min);
    let at: Vec<usize> = (20..180).filter(|&x| p.values[x] == lowest).collect();
    let argmin = (at[0] + at[at.len() - 1]).div_ceil(2);
    assert!(argmin.abs_diff(100) <= 2, "argmin {argmin}");
}

#[test]
fn four_tooth_film_yields_three_valleys_at_the_gaps() {
    let (img, truth) = generate(&clean(4, 480)).unwrap();
    let v = find_valleys(
        &img,
        &ValleyParams {
            min_separation: Some(80),
            ..ValleyParams::default()
        },
    )
    .unwrap();
    assert_eq!(v.positions.len(), 3);
    for (&got, &want) in v.positions.iter().zip(&truth.gap_centers) {
        assert!((got as f64 - want).abs() <= 3.0, "{got} vs {want}");
    }
}

#[test]
fn smoothing_keeps_monotone_profiles_monotone() {
    let values: Vec<f64> = (0..100).map(|i| ((i * i) % 7 + i * 3) as f64).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let p = ProjectionProfile {
        values: sorted,
        source_width: 100,
        source_height: 1,
    };
    for window in [3, 5, 11, 31] {
        let s = smooth_profile(&p, window).unwrap();
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_equals_the_column_sum_oracle(img in arb_image(80, 80)) {
        let p = vertical_projection(&img);
        prop_assert_eq!(p.values.len(), img.width());
        prop_assert_eq!(&p.values, &naive_projection(&img));
        for &v in &p.values {
            prop_assert!(v >= 0.0 && v <= 255.0 * img.height() as f64);
        }
        let total: f64 = img.pixels().iter().sum();
        let sum: f64 = p.values.iter().sum();
        prop_assert!((sum - total).abs() <= 1e-6 * total.max(1.0));
    }

    #[test]
    fn projection_of_a_mirror_is_reversed(img in arb_image(60, 60)) {
        let mut reversed = vertical_projection(&img).values;
        reversed.reverse();
        prop_assert_eq!(vertical_projection(&img.mirror_horizontal()).values, reversed);
    }

    #[test]
    fn valleys_are_separated_local_minima(p in arb_profile(), sep in 1usize..40, margin in 0usize..10) {
        let v = detect_valleys(&p, sep, margin).unwrap();
        let minima = local_minima(&p.values);
        prop_assert!(v.positions.windows(2).all(|w| w[0] < w[1] && w[1] - w[0] >= sep));
        for &x in &v.positions {
            prop_assert!(minima.contains(&x));
            prop_assert!(x >= margin && x + margin < p.len());
        }
    }

    #[test]
    fn valleys_ignore_positive_scaling(
        px in prop::collection::vec(0u8..=63, 60 * 12),
        k in prop::sample::select(vec![0.25, 0.5, 1.5, 2.0, 3.0, 4.0]),
        sep in 1usize..20,
        window in prop::sample::select(vec![1usize, 3, 5]),
    ) {
        // integer pixels and these factors keep every sum exact, so the
        // comparison is not blurred by rounding
        let img = GrayImage::new(60, 12, px.into_iter().map(f64::from).collect()).unwrap();
        let params = ValleyParams { min_separation: Some(sep), edge_margin: Some(2), smoothing_window: Some(window) };
        let scaled = img.map(|v| v * k);
        prop_assert_eq!(find_valleys(&img, &params).unwrap().positions, find_valleys(&scaled, &params).unwrap().positions);
    }
}
