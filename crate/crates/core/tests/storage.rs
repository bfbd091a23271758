mod oracles;

use agrpose::config::RunConfig;
use agrpose::model::Model;
use agrpose::train::{load_checkpoint, read_losses_csv, save_checkpoint, train, TrainOutput};
use oracles::samples;

fn small_run() -> RunConfig {
    let mut c = RunConfig::desk();
    c.synth.count = 6;
    c.train.epochs = 3;
    c.train.batch = 2;
    c
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    oracles::dataset_round_trip(10);
}

#[test]
fn corrupted_magic_is_rejected() {
    oracles::corrupted_magic_rejected();
}

#[test]
fn checkpoint_round_trip_and_zero_epochs_equal_init() {
    let mut c = small_run();
    c.train.epochs = 0;
    let init: Model<f32> = Model::init(&c).unwrap();
    let mut model = init.clone();
    let dir = tempfile::tempdir().unwrap();
    let out = TrainOutput::under(dir.path());
    let losses = train(&c, &mut model, &samples(&c), 0, Some(&out), &[]).unwrap();
    assert!(losses.is_empty());
    let (loaded, epoch) = load_checkpoint::<f32>(&out.epoch_dir(0)).unwrap();
    assert_eq!(epoch, 0);
    assert_eq!(loaded, init);

    let other = dir.path().join("copy");
    save_checkpoint(&other, &loaded, 7).unwrap();
    let (again, e) = load_checkpoint::<f32>(&other).unwrap();
    assert_eq!((again, e), (init, 7));
}

#[test]
fn resume_reproduces_an_uninterrupted_run() {
    let c = small_run();
    let data = samples(&c);

    let full_dir = tempfile::tempdir().unwrap();
    let full_out = TrainOutput::under(full_dir.path());
    let mut full: Model<f32> = Model::init(&c).unwrap();
    let full_losses = train(&c, &mut full, &data, 0, Some(&full_out), &[]).unwrap();
    assert_eq!(full_losses.len(), 3);

    let part_dir = tempfile::tempdir().unwrap();
    let part_out = TrainOutput::under(part_dir.path());
    let mut first = c.clone();
    first.train.epochs = 1;
    let mut m: Model<f32> = Model::init(&c).unwrap();
    train(&first, &mut m, &data, 0, Some(&part_out), &[]).unwrap();
    let (mut resumed, epoch) = load_checkpoint::<f32>(&part_out.epoch_dir(1)).unwrap();
    assert_eq!(epoch, 1);
    let previous = read_losses_csv(&part_out.losses_csv).unwrap();
    train(&c, &mut resumed, &data, 1, Some(&part_out), &previous).unwrap();

    assert_eq!(read_losses_csv(&part_out.losses_csv).unwrap(), read_losses_csv(&full_out.losses_csv).unwrap());
    let (a, _) = load_checkpoint::<f32>(&full_out.epoch_dir(3)).unwrap();
    let (b, _) = load_checkpoint::<f32>(&part_out.epoch_dir(3)).unwrap();
    assert_eq!(a, b);
}
