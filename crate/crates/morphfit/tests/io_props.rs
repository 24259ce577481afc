//! Property tests for the file formats: writers and readers are exact
//! inverses on arbitrary well-formed data.

use morphfit::geometry::Vec3;
use morphfit::io::{
    parse_config, read_depth_csv, read_landmark_sequence, read_ppm, write_config,
    write_depth_csv, write_landmark_sequence, write_ppm, LandmarkFrame, RunConfig,
};
use morphfit::warp::{DepthImage, PixelImage};
use proptest::prelude::*;

fn tmp_path(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("morphfit_props_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn landmark_sequence_round_trips(
        frames in 1usize..4,
        landmarks in 4usize..10,
        raw in proptest::collection::vec(-1e6f64..1e6, 3 * 4 * 10),
    ) {
        let mut it = raw.into_iter().cycle();
        let seq: Vec<LandmarkFrame> = (0..frames)
            .map(|t| LandmarkFrame {
                t,
                points: (0..landmarks)
                    .map(|_| {
                        Vec3::new(
                            it.next().unwrap(),
                            it.next().unwrap(),
                            it.next().unwrap(),
                        )
                    })
                    .collect(),
            })
            .collect();
        let path = tmp_path("prop_seq.csv");
        write_landmark_sequence(&seq, &path).unwrap();
        let back = read_landmark_sequence(&path).unwrap();
        prop_assert_eq!(seq, back);
    }

    #[test]
    fn ppm_round_trips_byte_exact(
        width in 1usize..12,
        height in 1usize..12,
        rgb in any::<bool>(),
        bytes in proptest::collection::vec(any::<u8>(), 12 * 12 * 3),
    ) {
        let channels = if rgb { 3 } else { 1 };
        let mut img = PixelImage::new(width, height, channels);
        img.data.copy_from_slice(&bytes[..width * height * channels]);
        let path = tmp_path("prop_img.ppm");
        write_ppm(&img, &path).unwrap();
        let back = read_ppm(&path).unwrap();
        prop_assert_eq!(img, back);
    }

    #[test]
    fn depth_csv_round_trips_bit_exact(
        width in 1usize..10,
        height in 1usize..10,
        values in proptest::collection::vec(
            prop_oneof![4 => -1e9f64..1e9, 1 => Just(f64::NAN)],
            10 * 10,
        ),
    ) {
        let mut depth = DepthImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                depth.set(x, y, values[y * width + x]);
            }
        }
        let path = tmp_path("prop_depth.csv");
        write_depth_csv(&depth, &path).unwrap();
        let back = read_depth_csv(&path).unwrap();
        prop_assert_eq!(back.width, width);
        prop_assert_eq!(back.height, height);
        for (a, b) in depth.depth.iter().zip(&back.depth) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn config_echo_is_idempotent(
        kappa in 0.0f64..10.0,
        epsilon in 1e-12f64..1e-2,
        alpha in 0.0f64..1.0,
        max_iters in 1usize..500,
    ) {
        let config = RunConfig { kappa, epsilon, alpha, max_iters, ..RunConfig::default() };
        let path = tmp_path("prop_config.json");
        write_config(&config, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&config, &back);
        let path2 = tmp_path("prop_config2.json");
        write_config(&back, &path2).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
