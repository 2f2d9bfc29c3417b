use expecta_bench::{annotations, model};
use expecta_core::annot::Canvas;

#[test]
fn fixtures_are_valid_and_stable() {
    let a = annotations(64, 16);
    assert_eq!(a, annotations(64, 16));
    assert!(a.iter().all(|x| x.is_valid(Canvas::square(64))));
    let m = model("VGG13", 32);
    assert_eq!(m.arch().layer_count(), 13);
}
