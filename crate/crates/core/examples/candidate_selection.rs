//! Candidate pruning: four by prior, three more by context fit.

use mrnel::corpus::{CandidateSelector, Embeddings, PriorTable};

fn main() -> mrnel::Result<()> {
    let mut entities = Embeddings::new(2);
    let mut priors = PriorTable::new();
    // ten entities for "paris": popularity falls with the index, entity 8
    // points in the direction of the context words
    for e in 0..10 {
        let v = if e == 8 { vec![0.0, 1.0] } else { vec![1.0, 0.1 * e as f64] };
        entities.insert(format!("paris_{e}"), &v)?;
        priors.insert("paris", &format!("paris_{e}"), 0.5 / (e + 1) as f64)?;
    }
    let mut words = Embeddings::new(2);
    words.insert("hilton".into(), &[0.0, 1.0])?;
    words.insert("hotel".into(), &[0.1, 0.9])?;

    let tokens: Vec<String> = "the heiress paris left the hilton hotel".split(' ').map(String::from).collect();
    let selector = CandidateSelector::new(&priors, &words, &entities);
    println!("context vector: {:?}", selector.context_vector(&tokens, 2, 3));
    for c in selector.select(&tokens, 2, 3, "paris", None) {
        println!("  {:<9} prior {:.3}", c.entity, c.prior);
    }
    Ok(())
}
