#![allow(dead_code)]

use std::path::Path;

use qgen::config::ExperimentConfig;
use serde_json::{json, Value};

const NAMES: [&str; 25] = [
    "ann", "bob", "cara", "dan", "eve", "finn", "gail", "hal", "iris", "jon", "kate", "liam", "mia", "ned", "olga",
    "pete", "quinn", "rosa", "sam", "tara", "uma", "vic", "wes", "xena", "yuri",
];
const PLACES: [&str; 5] = ["rome", "oslo", "lima", "cairo", "perth"];
const ITEMS: [&str; 5] = ["tea", "jazz", "chess", "kites", "rice"];

fn cap(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Two questions per context, `n` examples in total (at most 50). Each
/// question is a fixed template over the answer's sentence, so the set is
/// memorizable.
pub fn memorization_squad(n: usize) -> Value {
    let mut paragraphs = Vec::new();
    let mut count = 0;
    for (i, name) in NAMES.iter().enumerate() {
        if count >= n {
            break;
        }
        let (place, item) = (PLACES[i % 5], ITEMS[(i / 5) % 5]);
        let s1 = format!("{} lives in {}.", cap(name), cap(place));
        let s2 = format!("{} likes {}.", cap(name), item);
        let context = format!("{s1} {s2} The weather was mild.");
        let place_at = context.find(&cap(place)).unwrap();
        let item_at = context.rfind(item).unwrap();
        let mut qas = vec![json!({
            "id": format!("{name}-where"),
            "question": format!("Where does {} live?", cap(name)),
            "answers": [{"text": cap(place), "answer_start": place_at}],
        })];
        count += 1;
        if count < n {
            qas.push(json!({
                "id": format!("{name}-what"),
                "question": format!("What does {} like?", cap(name)),
                "answers": [{"text": item, "answer_start": item_at}],
            }));
            count += 1;
        }
        paragraphs.push(json!({"context": context, "qas": qas}));
    }
    json!({"version": "1.1", "data": [{"title": "people", "paragraphs": paragraphs}]})
}

pub fn write_json(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Small model, no dropout, evaluation on the training split.
pub fn tiny_config(data: &Path, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::with_data(data);
    c.paths.out = out.to_path_buf();
    c.seed = 11;
    c.data.test_fraction = 0.0;
    c.data.eval_split = "train".into();
    c.data.max_len = 48;
    c.data.vocab_size = 200;
    c.model.d_model = 32;
    c.model.heads = 2;
    c.model.ff_dim = 64;
    c.model.encoder_layers = 1;
    c.model.decoder_layers = 1;
    c.model.selector_hidden = 16;
    c.model.dropout = 0.0;
    c.train.learning_rate = 3e-3;
    c.train.weight_decay = 0.0;
    c.train.batch_size = 10;
    c.train.epochs = 2;
    c.train.k = 2;
    c.train.max_question_len = 12;
    c.decode.beam_size = 2;
    c.decode.max_len = 12;
    c.embedding.dim = 64;
    c
}

/// Every question names the people of the three sentences that mention the
/// answer; two filler sentences follow. A generator that sees only one of the
/// three sentences cannot recover the other two names.
pub fn three_sentence_squad(contexts: usize) -> Value {
    let answers = ["zed", "moe", "lux", "kip", "taj", "ove"];
    let verbs = ["met", "called", "visited"];
    let mut paragraphs = Vec::new();
    for i in 0..contexts {
        let people = [NAMES[i % 25], NAMES[(i + 7) % 25], NAMES[(i + 13) % 25]];
        let answer = cap(answers[i % answers.len()]);
        let signal: Vec<String> =
            people.iter().zip(verbs).map(|(p, v)| format!("{} {v} {answer}.", cap(p))).collect();
        let context = format!("{} The sky was grey. Rain fell all day.", signal.join(" "));
        let start = context.find(&answer).unwrap();
        paragraphs.push(json!({
            "context": context,
            "qas": [{
                "id": format!("q{i}"),
                "question": format!("Who did {}, {} and {} know?", cap(people[0]), cap(people[1]), cap(people[2])),
                "answers": [{"text": answer, "answer_start": start}],
            }],
        }));
    }
    json!({"version": "1.1", "data": [{"title": "signal", "paragraphs": paragraphs}]})
}
