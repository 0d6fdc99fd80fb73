use std::fs;
use std::path::Path;

use dfnet::data::{load_dataset_sized, DirSplit, Label};
use dfnet::ImageSource;
use image::{GrayImage, Luma, RgbImage};

fn gray(path: &Path, w: u32, h: u32, v: u8) {
    GrayImage::from_pixel(w, h, Luma([v])).save(path).unwrap();
}

fn layout(root: &Path) {
    for split in ["train", "val"] {
        for class in ["NORMAL", "OPACITY"] {
            fs::create_dir_all(root.join(split).join(class)).unwrap();
        }
    }
    let n = root.join("train/NORMAL");
    gray(&n.join("b.png"), 8, 4, 20);
    gray(&n.join("a.png"), 4, 8, 10);
    let o = root.join("train/OPACITY");
    gray(&o.join("2.png"), 4, 4, 200);
    gray(&o.join("10.png"), 4, 4, 100);
    RgbImage::from_pixel(4, 4, image::Rgb([255, 0, 0])).save(o.join("c.png")).unwrap();
    fs::write(o.join("notes.txt"), b"not an image").unwrap();
    gray(&root.join("val/NORMAL/x.png"), 4, 4, 0);
    gray(&root.join("val/OPACITY/y.png"), 4, 4, 255);
}

#[test]
fn files_are_ordered_by_name_and_unreadable_ones_skipped() {
    let dir = tempfile::tempdir().unwrap();
    layout(dir.path());
    let ds = load_dataset_sized(dir.path(), 4).unwrap();
    assert_eq!((ds.train.count(Label::Normal), ds.train.count(Label::Opacity)), (2, 3));
    assert_eq!((ds.val.count(Label::Normal), ds.val.count(Label::Opacity)), (1, 1));
    let names: Vec<_> = (0..3)
        .map(|i| ds.train.path(Label::Opacity, i).file_name().unwrap().to_str().unwrap().to_owned())
        .collect();
    assert_eq!(names, ["10.png", "2.png", "c.png"]);
    assert_eq!(ds.train.path(Label::Normal, 0).file_name().unwrap(), "a.png");
}

#[test]
fn loaded_images_are_resized_normalized_rgb() {
    let dir = tempfile::tempdir().unwrap();
    layout(dir.path());
    let ds = load_dataset_sized(dir.path(), 4).unwrap();
    let a = ds.train.load(Label::Normal, 0).unwrap();
    assert_eq!(a.shape(), dfnet::Shape::new(1, 4, 4, 3));
    assert!(a.data().iter().all(|&v| (v - 10.0 / 255.0).abs() < 1e-7));
    let red = ds.train.load(Label::Opacity, 2).unwrap();
    assert_eq!((red.get(0, 1, 1, 0), red.get(0, 1, 1, 1)), (1.0, 0.0));
}

#[test]
fn statistics_cover_both_classes() {
    let dir = tempfile::tempdir().unwrap();
    layout(dir.path());
    let split = DirSplit::scan(&dir.path().join("train"), 4).unwrap();
    let s = split.stats;
    assert_eq!((s.normal, s.opacity), (2, 3));
    // widths 8, 4, 4, 4, 4 and heights 4, 8, 4, 4, 4
    assert!((s.width_mean - 4.8).abs() < 1e-12);
    assert!((s.width_std - 1.6).abs() < 1e-12);
    assert!((s.height_mean - 4.8).abs() < 1e-12);
}

#[test]
fn missing_directories_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset_sized(&dir.path().join("absent"), 4).is_err());
    fs::create_dir_all(dir.path().join("train/NORMAL")).unwrap();
    assert!(load_dataset_sized(dir.path(), 4).is_err());
}
