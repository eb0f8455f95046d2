// Pull snippet/description pairs out of a README.

use snipdoc::corpus::parse_readme;

const README: &str = r#"# audio-loader

Load an audio file with the default options.

```js
const load = require('audio-loader');
load('sound.mp3').then(buffer => play(buffer));
```

## Options

```js
load('sound.mp3', { mode: 'stream' });
```

Unfinished block below.

```sh
npm run demo
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let extraction = parse_readme(README, "README.md", "audio-loader");
    for record in &extraction.records {
        println!("{} [{}]", record.snippet_id, record.language_hint.as_deref().unwrap_or("-"));
        match &record.description {
            Some(d) => println!("  description: {d:?}"),
            None => println!("  description: none"),
        }
    }
    for warning in &extraction.warnings {
        println!("warning: {warning:?}");
    }
    assert_eq!(extraction.records.len(), 3);
    assert!(extraction.records[1].description.is_none());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
