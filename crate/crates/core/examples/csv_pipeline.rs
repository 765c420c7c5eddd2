//! End to end from CSV files: write a labelled corpus, read it back, build a
//! vocabulary, distil anchors from a teacher and train a classifier.
//!
//! cargo run --release --example csv_pipeline

use std::io::Write;

use ade::data::{build_vocab, encode_corpus, load_csv, synth_polysemy, Corpus, CsvSchema, Split, SynthTaskSpec};
use ade::distill::{distill_codebook, synthetic_teacher, DistillConfig, SyntheticTeacherSpec};
use ade::evalbench::{classification_metrics, format_metrics};
use ade::pipeline::{predict, train_classifier, AdeModel, ModelConfig, TrainConfig};

fn write_csv(corpus: &Corpus, path: &std::path::Path) -> ade::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "label,text")?;
    for r in &corpus.records {
        writeln!(f, "{},\"{}\"", corpus.label_names[r.label], r.text)?;
    }
    Ok(())
}

fn main() -> ade::Result<()> {
    let dir = std::env::temp_dir().join("ade_csv_example");
    std::fs::create_dir_all(&dir)?;
    let task = synth_polysemy(&SynthTaskSpec { train_size: 800, test_size: 400, ..Default::default() })?;
    write_csv(&task.train, &dir.join("train.csv"))?;
    write_csv(&task.test, &dir.join("test.csv"))?;

    let schema = CsvSchema::labelled_text();
    let train = load_csv(&dir.join("train.csv"), &schema, Split::Train, None)?;
    let test = load_csv(&dir.join("test.csv"), &schema, Split::Test, Some(&train.label_names))?;
    let vocab = build_vocab(&train, 5000)?;
    let train_set = encode_corpus(&train, &vocab, 32)?;
    let test_set = encode_corpus(&test, &vocab, 32)?;
    println!("{} train / {} test rows, vocabulary {}", train.len(), test.len(), vocab.len());

    // no pretrained teacher here, so distil from a random clustered one
    let dim = 32;
    let teacher = synthetic_teacher(&SyntheticTeacherSpec { num_words: vocab.len(), dim, ..Default::default() })?.teacher;
    let dc = distill_codebook(&teacher, &DistillConfig { num_anchors: 16, steps: 300, ..Default::default() }, 0.1)?;

    let classes = train.num_classes();
    let cfg = ModelConfig { dim, classes, trainable_embeddings: true, ..Default::default() };
    let model = AdeModel::new(cfg, dc.codebook, dc.outcome.anchors, 0)?.with_vocab(vocab)?;
    let tcfg = TrainConfig { total_steps: 600, trainable_embeddings: true, ..Default::default() };
    let (model, _) = train_classifier(&model, &train_set, &tcfg)?;
    let preds = predict(&model, &test_set, 256)?;
    println!("{}", format_metrics(&classification_metrics(&preds, &test_set.labels, classes)?));
    Ok(())
}
