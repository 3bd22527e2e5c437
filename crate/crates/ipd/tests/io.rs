use ipd::io::{self, CategoricalSchema, IoError, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn empty_and_na_outcomes_are_unlabeled() {
    let text = "y,yhat,x\n1.5,1.2,0.1\n,0.8,0.2\n2.0,2.1,0.3\nNA,0.4,0.4\n";
    let d = io::load_csv(text.as_bytes(), &Schema::new("y", "yhat", &["x"])).unwrap();
    assert_eq!((d.n_labeled(), d.n_unlabeled()), (2, 2));
    assert_eq!(d.labeled()[1].y, 2.0);
    assert_eq!(d.unlabeled()[0].y_hat, 0.8);
    assert_eq!(d.unlabeled()[1].x, vec![0.4]);
}

#[test]
fn missing_column_is_named() {
    let text = "y,x\n1,2\n";
    match io::load_csv(text.as_bytes(), &Schema::new("y", "yhat", &["x"])) {
        Err(IoError::MissingColumn(c)) => assert_eq!(c, "yhat"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn parse_error_reports_row_and_column() {
    let text = "y,yhat\n1,2\n3,oops\n";
    match io::load_csv(text.as_bytes(), &Schema::new("y", "yhat", &[])) {
        Err(IoError::Parse { row, column, value }) => {
            assert_eq!((row, column.as_str(), value.as_str()), (2, "yhat", "oops"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn round_trip_is_cell_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::from("y,yhat,a,b\n");
    let mut unl = String::new();
    for i in 0..1000 {
        let (yh, a, b): (f64, f64, f64) = (rng.random(), rng.random::<f64>() - 0.5, 1e3 * rng.random::<f64>());
        if i % 3 == 0 {
            unl.push_str(&format!(",{yh},{a},{b}\n"));
        } else {
            text.push_str(&format!("{},{yh},{a},{b}\n", rng.random::<f64>() * 10.0));
        }
    }
    text.push_str(&unl);
    let schema = Schema::new("y", "yhat", &["a", "b"]);
    let d = io::load_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(d.n(), 1000);
    let mut out = Vec::new();
    io::save_csv(&mut out, &d, &schema).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);
}

#[test]
fn truth_column_is_attached_to_unlabeled_rows() {
    let text = "y,yhat,t\n1,1.1,1\n,2.2,2.5\n";
    let schema = Schema { truth: Some("t".into()), ..Schema::new("y", "yhat", &[]) };
    let d = io::load_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(d.unlabeled_truth(), Some(&[2.5][..]));
    let mut out = Vec::new();
    io::save_csv(&mut out, &d, &schema).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);
}

#[test]
fn categorical_file() {
    let text = "g,gh,o,sa,sb\na,a,1,0.9,0.1\n,b,0,0.3,0.7\nb,a,true,0.6,0.4\nNA,b,false,0.2,0.8\n";
    let schema = CategoricalSchema {
        group: "g".into(),
        group_hat: "gh".into(),
        outcome: "o".into(),
        categories: vec!["a".into(), "b".into()],
        scores: vec!["sa".into(), "sb".into()],
        true_group: None,
    };
    let t = io::load_categorical_csv(text.as_bytes(), &schema).unwrap();
    let cd = &t.data;
    assert_eq!(cd.len(), 4);
    assert_eq!(cd.n_labeled(), 2);
    assert_eq!(cd.group(), &[Some(0), None, Some(1), None]);
    assert_eq!(cd.group_hat(), &[0, 1, 0, 1]);
    assert_eq!(cd.outcome(), &[true, false, true, false]);
    assert_eq!(cd.scores().unwrap()[1], vec![0.3, 0.7]);

    let bad = "g,gh,o\nc,a,1\n";
    let schema = CategoricalSchema { scores: vec![], ..schema };
    assert!(io::load_categorical_csv(bad.as_bytes(), &schema).is_err());
}
