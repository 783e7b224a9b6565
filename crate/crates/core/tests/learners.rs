use aviary::learners::{
    cnn_fit, grid_search, knn_fit, Classifier, CnnConfig, ConvBlock, ForestConfig, KnnConfig, LearnerConfig, ModelBody,
    Preprocess, TrainedModel,
};
use aviary::raster::{Image, SeededRng};
use aviary::Error;
use rand::Rng;

/// A filled disc or a horizontal bar at a random place on a noisy sky.
fn shape(disc: bool, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed).rng();
    let (cy, cx) = (rng.random_range(20.0..44.0), rng.random_range(20.0..44.0));
    let r: f64 = rng.random_range(6.0..9.0);
    let noise: Vec<f64> = (0..64 * 64).map(|_| rng.random_range(-0.05..0.05)).collect();
    Image::from_fn(64, 64, 3, |y, x, c| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        let inside = if disc {
            dy * dy + dx * dx <= r * r
        } else {
            dy.abs() <= 2.0 && dx.abs() <= 2.2 * r
        };
        let sky = [0.42, 0.65, 0.87][c] + noise[y * 64 + x];
        if inside {
            0.2
        } else {
            sky
        }
    })
    .unwrap()
}

fn refs(v: &[Image]) -> Vec<&Image> {
    v.iter().collect()
}

fn set(n: usize, offset: u64) -> (Vec<Image>, Vec<usize>) {
    (0..n).map(|i| (shape(i % 2 == 0, offset + i as u64), i % 2)).unzip()
}

#[test]
fn convnet_separates_discs_from_bars() {
    let (train, ty) = set(100, 0);
    let (val, vy) = set(20, 1000);
    let (test, ey) = set(40, 2000);
    let cfg = CnnConfig {
        blocks: vec![ConvBlock::new(8), ConvBlock::new(8), ConvBlock::new(16)],
        fc_neurons: 32,
        max_epochs: 30,
        patience: 10,
        seed: 1,
        ..CnnConfig::default()
    };
    let classes = vec!["disc".to_string(), "bar".to_string()];
    let (model, log) = cnn_fit((&refs(&train), &ty), (&refs(&val), &vy), classes, &cfg).unwrap();
    let correct = test
        .iter()
        .zip(&ey)
        .filter(|(img, &y)| model.predict(img).unwrap() == model.classes[y])
        .count();
    assert!(correct >= 36, "{correct}/40 after {} epochs", log.stopped_epoch());
    assert!(log.best_epoch <= log.stopped_epoch());

    // bitwise reproducible and identical after a save/load round trip
    let (again, _) = cnn_fit((&refs(&train), &ty), (&refs(&val), &vy), model.classes.clone(), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    for img in &test {
        let a = model.predict_scores(img).unwrap();
        assert_eq!(a, again.predict_scores(img).unwrap());
        assert_eq!(a, loaded.predict_scores(img).unwrap());
    }
}

#[test]
fn classical_learners_round_trip_and_grid_search() {
    let (imgs, y) = set(40, 50);
    let pre = Preprocess::new(8);
    let x: Vec<Vec<f64>> = imgs.iter().map(|i| pre.features(i).unwrap()).collect();
    let mut grid: Vec<LearnerConfig> = KnnConfig::search_grid()
        .into_iter()
        .take(6)
        .map(LearnerConfig::Knn)
        .collect();
    grid.push(LearnerConfig::Forest(ForestConfig {
        n_trees: 10,
        ..ForestConfig::default()
    }));
    let result = grid_search(&grid, &x, &y, 2, 3).unwrap();
    assert_eq!(result.scores.len(), grid.len());
    let best = result.scores.iter().map(|s| s.1).fold(f64::MIN, f64::max);
    assert_eq!(result.scores[result.best_index].1, best);
    assert!(result.scores[..result.best_index].iter().all(|s| s.1 < best));
    assert_eq!(result.to_csv().lines().count(), grid.len() + 1);

    let classes = vec!["disc".to_string(), "bar".to_string()];
    let body = result.best.fit(&x, &y, 2).unwrap();
    let model = TrainedModel::new(classes.clone(), pre, body);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    for img in &imgs {
        assert_eq!(model.predict_scores(img).unwrap(), loaded.predict_scores(img).unwrap());
    }

    let knn = knn_fit(&x, &y, 2, KnnConfig::REFERENCE_LARGE).unwrap();
    let m = TrainedModel::new(classes, pre, ModelBody::Knn(knn));
    // a 1-NN model recalls its own training set
    assert!(imgs
        .iter()
        .zip(&y)
        .all(|(img, &c)| m.predict(img).unwrap() == m.classes[c]));
}

#[test]
fn unknown_model_versions_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let model = TrainedModel::lookup(vec!["a".into()], Default::default(), Some("a".into()));
    model.save(&path).unwrap();
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("\"format_version\":1", "\"format_version\":9");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(TrainedModel::load(&path), Err(Error::Configuration(_))));
}
