//! Asks the keyword chains for one image against a hand-written answer
//! fixture and prints each transcript.
//!
//! cargo run --example keyword_chains

use genprompt::backends::{ImageRef, MockCaptionQa, QaFixture};
use genprompt::cctp::{run_cctp, write_transcripts, PromptTemplates, TaskPrompt};
use genprompt::image_ops::ImageTensor;
use ndarray::Array3;

const FIXTURE: &str = r#"
version = 1

[images.pond]
caption = "a pond with green plants"
"fore.1" = "A frog."
"fore.2" = "It is probably a toad, hiding"
"fore.3" = "I'm not sure."
"back.1" = "duckweed"
"back.2" = "The lily pads."
"back.3" = "water"
"#;

fn main() -> genprompt::Result<()> {
    let qa = MockCaptionQa::new(QaFixture::from_toml(FIXTURE)?);
    let prompt = TaskPrompt::new("the camouflaged animal", vec!["hidden".into(), "concealed".into()])?;
    let pixels = ImageTensor::new(Array3::from_elem((16, 16, 3), 0.4))?;
    let image = ImageRef { id: "pond", pixels: &pixels };
    let (keywords, transcripts) = run_cctp(image, &prompt, &qa, &PromptTemplates::default())?;
    for t in &transcripts {
        println!("chain {}: {}", t.chain_index, t.fore_question);
        println!("  -> {:?} => {}{}", t.fore_answer, t.fore_keyword, if t.fore_fallback { " (fallback)" } else { "" });
        println!("  {}", t.back_question);
        println!("  -> {:?} => {}", t.back_answer, t.back_keyword);
    }
    println!("fore {:?}  back {:?}  ({} queries)", keywords.fore_keywords, keywords.back_keywords, qa.queries_served());
    write_transcripts(std::io::stdout().lock(), "pond", &transcripts)?;
    Ok(())
}
