use dentseg::image::{encode_pgm, load_image};
use dentseg::phantom::*;
use dentseg::projection::vertical_projection;
use proptest::prelude::*;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

// Pinned so that the noise stream and the renderer stay stable across
// releases; regenerate only on a deliberate format change.
const GOLDEN: u64 = 0x4854_fd80_277a_8ae1;

fn golden_spec() -> PhantomSpec {
    PhantomSpec {
        width: 96,
        height: 128,
        tooth_count: 2,
        gap_width: 8.0,
        tilt_degrees: 7.5,
        canal_teeth: vec![0],
        canal_width: 4.0,
        noise_sigma: 8.0,
        seed: 42,
        ..PhantomSpec::default()
    }
}

#[test]
fn golden_film_checksum() {
    let (img, _) = generate(&golden_spec()).unwrap();
    assert_eq!(fnv1a(&encode_pgm(&img)), GOLDEN);
}

#[test]
fn batch_files_reload_to_the_generated_films() {
    let specs: Vec<PhantomSpec> = default_batch_specs().into_iter().take(3).collect();
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = batch(&specs, dir.path()).unwrap();
    let manifest = Manifest::load(&manifest_path).unwrap();
    assert_eq!(manifest.entries.len(), 3);
    for (entry, spec) in manifest.entries.iter().zip(&specs) {
        assert_eq!(&entry.spec, spec);
        let (img, truth) = generate(spec).unwrap();
        let stored = load_image(Manifest::resolve(&manifest_path, &entry.image_path)).unwrap();
        assert_eq!(encode_pgm(&stored), encode_pgm(&img));
        let stored_truth =
            PhantomTruth::load(Manifest::resolve(&manifest_path, &entry.truth_path)).unwrap();
        assert_eq!(stored_truth, truth);
        assert_eq!((stored.width(), stored.height()), (spec.width, spec.height));
    }
}

#[test]
fn batch_is_reproducible_byte_for_byte() {
    let specs: Vec<PhantomSpec> = default_batch_specs().into_iter().skip(10).take(2).collect();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    batch(&specs, a.path()).unwrap();
    batch(&specs, b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 3);
    for n in names {
        assert_eq!(
            std::fs::read(a.path().join(&n)).unwrap(),
            std::fs::read(b.path().join(&n)).unwrap()
        );
    }
}

#[test]
fn default_batch_follows_the_tooth_mix() {
    let specs = default_batch_specs();
    assert_eq!(specs.len(), DEFAULT_BATCH_SIZE);
    for (teeth, films) in DEFAULT_BATCH_TOOTH_MIX {
        assert_eq!(
            specs.iter().filter(|s| s.tooth_count == teeth).count(),
            films
        );
    }
    assert!(specs
        .iter()
        .all(|s| !s.canal_teeth.is_empty() && s.noise_sigma == 8.0));
}

#[test]
fn gap_centres_split_the_width_evenly() {
    for teeth in 2..=5 {
        let spec = PhantomSpec {
            tooth_count: teeth,
            width: 600,
            gap_width: 12.0,
            canal_teeth: vec![],
            ..PhantomSpec::default()
        };
        let (_, truth) = generate(&spec).unwrap();
        let want: Vec<f64> = (1..teeth)
            .map(|k| 600.0 * k as f64 / teeth as f64)
            .collect();
        assert_eq!(truth.gap_centers, want);
        assert_eq!(truth.gap_masks.len(), teeth - 1);
        assert_eq!(truth.tooth_masks.len(), teeth);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tilt_free_gaps_are_projection_dips(teeth in 2usize..=5, width in 300usize..600, seed in any::<u64>()) {
        let spec = PhantomSpec {
            width,
            height: 300,
            tooth_count: teeth,
            gap_width: 12.0,
            canal_teeth: vec![],
            noise_sigma: 0.0,
            seed,
            ..PhantomSpec::default()
        };
        let (img, truth) = generate(&spec).unwrap();
        let p = vertical_projection(&img).values;
        for &c in &truth.gap_centers {
            let x = c.floor() as usize;
            let pitch = width / teeth;
            let tooth_mid = x - pitch / 2;
            prop_assert!(p[x] < p[tooth_mid]);
        }
    }

    #[test]
    fn pixels_stay_in_range(tilt in -15.0..15.0f64, sigma in 0.0..40.0f64, seed in any::<u64>()) {
        let spec = PhantomSpec { width: 160, height: 200, gap_width: 10.0, canal_width: 4.0, tilt_degrees: tilt, noise_sigma: sigma, seed, ..PhantomSpec::default() };
        let (img, truth) = generate(&spec).unwrap();
        prop_assert!(img.pixels().iter().all(|&v| (0.0..=255.0).contains(&v)));
        prop_assert_eq!(truth.tilt_degrees, tilt);
        for g in &truth.gap_masks {
            for t in &truth.tooth_masks {
                prop_assert!(g.data.iter().zip(&t.data).all(|(a, b)| !(*a && *b)));
            }
        }
    }
}
