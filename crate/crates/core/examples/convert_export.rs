//! Converts an annotation-tool export into annotation files.

use aoml::pipeline::convert::convert_export;

const EXPORT: &str = r#"[
  {"documentName": "r101.txt",
   "document": "Display quality is awesome",
   "tokens": [{"start": 0, "end": 15, "token_start": 0, "entityLabel": "ASP"},
              {"start": 19, "end": 26, "token_start": 3, "entityLabel": "OPI"}],
   "relations": [{"head": 3, "child": 0, "relationLabel": "ASP-OPI"}]}
]"#;

fn main() -> aoml::Result<()> {
    for c in convert_export(EXPORT.as_bytes())? {
        println!("{} ({} relation(s) turned around)", c.document.id, c.flipped);
        println!("{}", serde_json::to_string_pretty(&c.annotation)?);
    }
    Ok(())
}
