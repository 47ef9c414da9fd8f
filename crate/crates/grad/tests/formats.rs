//! File formats: trace parsing with row-level rejects, and bit-exact round
//! trips of statistics, labeled data, parameters and model files.

use grad::io::{self, ColumnMap, TunedChannel, TunedParams};
use grad::model_file;
use grad_core::gru::GruModel;
use grad_core::inject::{build_labeled_dataset, Profile, SchedulePlan};
use grad_core::rema::{ComboScore, RemaParams};
use grad_core::synth::{generate, TrajectoryConfig};
use grad_core::trace::{normalize, ChannelStats, NormSource, NormStats, Series};
use grad_core::Channel;

#[test]
fn rows_map_to_readings_or_rejects() {
    let text = "timestamp,latitude,longitude,speed\n\
                0.0,33.845,-112.135,12.4\n\
                1.0,95.0,-112.135,12.4\n\
                2.0,33.846,-112.136\n\
                3.0,33.847,-112.137,12.6\n";
    let (trace, rejects) = io::parse_trace(text.as_bytes(), &ColumnMap::default(), "fixture").unwrap();
    assert_eq!(trace.readings.len(), 2);
    let r = &trace.readings[0];
    assert_eq!((r.timestamp, r.latitude, r.longitude, r.speed), (0.0, Some(33.845), Some(-112.135), Some(12.4)));
    assert_eq!(rejects.len(), 2);
    assert_eq!(rejects[0].row_number, 2);
    assert!(rejects[0].reason.contains("latitude out of range"), "{}", rejects[0].reason);
    assert_eq!(rejects[1].row_number, 3);
}

#[test]
fn three_rows_one_malformed() {
    let text = "timestamp,latitude,longitude\n0,1.0,2.0\n1,abc,2.0\n2,1.5,2.5\n";
    let (trace, rejects) = io::parse_trace(text.as_bytes(), &ColumnMap::default(), "fixture").unwrap();
    assert_eq!((trace.readings.len(), rejects.len()), (2, 1));
}

#[test]
fn missing_required_column_is_a_data_error() {
    let err = io::parse_trace("time,latitude,longitude\n0,1,2\n".as_bytes(), &ColumnMap::default(), "x").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn norm_stats_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("norm.csv");
    let stats = NormStats {
        channels: vec![
            ChannelStats { channel: Channel::Latitude, mean: 33.845_123_456_789_01, std: 1.0 / 3.0, degenerate: false },
            ChannelStats { channel: Channel::Longitude, mean: -112.1, std: 7.1e-5, degenerate: false },
        ],
    };
    io::write_norm_stats(&path, &stats).unwrap();
    assert_eq!(io::read_norm_stats(&path).unwrap(), stats);
}

#[test]
fn labeled_dataset_round_trips() {
    let trace = generate(&TrajectoryConfig::vehicle(3000), 7);
    let series = Series::from_trace(&trace).unwrap();
    let (normalized, _) = normalize(&series, NormSource::Fit).unwrap();
    let labeled = build_labeled_dataset(&normalized, &SchedulePlan::profile(Profile::Mmitss), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labeled.csv");
    io::write_labeled(&path, &labeled).unwrap();
    let back = io::read_labeled(&path).unwrap();
    assert_eq!(back.timestamps, labeled.timestamps);
    assert_eq!(back.channels, labeled.channels);
}

#[test]
fn tuned_params_round_trip() {
    let params = RemaParams {
        alpha: 0.3,
        alpha_min: 0.05,
        alpha_max: 0.99,
        punish: 0.1,
        reward: 0.02,
        slide_size: 12,
        sensitivity: 3.0,
    };
    let best = ComboScore { combo_id: 4, params, f1_anomaly: 0.81, f1_normal: 0.97, score: 0.89 };
    let tuned = TunedParams { channel: vec![TunedChannel::new(Channel::Latitude, &best)] };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.toml");
    io::write_params(&path, &tuned).unwrap();
    let back = io::read_params(&path).unwrap();
    assert_eq!(back, tuned);
    assert_eq!(back.params(), vec![(Channel::Latitude, params)]);
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let mut model = GruModel::init(11, [7, 5], 2, 10, 99);
    model.role = "detector".into();
    model.schema_hash = 0xdead_beef_0123_4567;
    let bytes = model_file::encode(&model);
    let back = model_file::decode(&bytes).unwrap();
    for (a, b) in model.weights.tensors().iter().zip(back.weights.tensors()) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back, model);
    assert_eq!(model_file::encode(&back), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    model_file::save(&path, &model).unwrap();
    assert_eq!(model_file::load(&path).unwrap(), model);
}

#[test]
fn damaged_model_files_are_rejected() {
    let bytes = model_file::encode(&GruModel::init(3, [3, 2], 2, 4, 1));
    assert_eq!(model_file::decode(&bytes[..bytes.len() - 1]), Err(model_file::ModelFileError::Truncated));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(model_file::decode(&bad), Err(model_file::ModelFileError::BadMagic));
    let mut long = bytes;
    long.push(0);
    assert_eq!(model_file::decode(&long), Err(model_file::ModelFileError::Trailing(1)));
}
