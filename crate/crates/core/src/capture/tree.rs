//! JSON and XML readers producing field values.

use std::collections::BTreeMap;

use crate::model::{json, FieldValue, ModelError};

use super::CaptureError;

pub const TREE_JSON: &str = "tree-json";
pub const TREE_XML: &str = "tree-xml";

/// Parses a tree document.
///
/// XML elements become maps: attributes under `@name`, text under `#text`,
/// repeated child names collapse into lists. An element with neither
/// attributes nor child elements is its text. All XML leaves are text.
pub fn parse_tree(data: &[u8], format_label: &str) -> Result<FieldValue, CaptureError> {
    match format_label {
        TREE_JSON => json::parse(data, false).map_err(|e| match e {
            ModelError::Parse {
                offset,
                line,
                column,
                message,
            } => CaptureError::Parse {
                offset,
                line,
                column,
                message,
            },
            other => CaptureError::Parse {
                offset: 0,
                line: 1,
                column: 1,
                message: other.to_string(),
            },
        }),
        TREE_XML => parse_xml(data),
        other => Err(CaptureError::UnsupportedFormat(other.to_owned())),
    }
}

fn parse_xml(data: &[u8]) -> Result<FieldValue, CaptureError> {
    let text = std::str::from_utf8(data).map_err(|e| CaptureError::Encoding {
        offset: e.valid_up_to(),
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        CaptureError::Parse {
            offset: offset_of(text, pos.row as usize, pos.col as usize),
            line: pos.row as usize,
            column: pos.col as usize,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    let mut map = BTreeMap::new();
    map.insert(root.tag_name().name().to_owned(), element_value(root));
    Ok(FieldValue::Map(map))
}

fn offset_of(text: &str, line: usize, col: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + l.chars().take(col.saturating_sub(1)).map(char::len_utf8).sum::<usize>();
        }
        offset += l.len();
    }
    text.len()
}

fn element_value(node: roxmltree::Node<'_, '_>) -> FieldValue {
    let children: Vec<_> = node.children().filter(|c| c.is_element()).collect();
    let text: String = node
        .children()
        .filter(|c| c.is_text())
        .filter_map(|c| c.text())
        .collect();
    if children.is_empty() && node.attributes().len() == 0 {
        return FieldValue::Text(text);
    }
    let mut map: BTreeMap<String, FieldValue> = BTreeMap::new();
    for attr in node.attributes() {
        map.insert(format!("@{}", attr.name()), FieldValue::text(attr.value()));
    }
    for child in children {
        let name = child.tag_name().name().to_owned();
        let value = element_value(child);
        match map.remove(&name) {
            None => {
                map.insert(name, value);
            }
            Some(FieldValue::List(mut items)) if is_repeated(node, &name) => {
                items.push(value);
                map.insert(name, FieldValue::List(items));
            }
            Some(prev) => {
                map.insert(name, FieldValue::List(vec![prev, value]));
            }
        }
    }
    if !text.trim().is_empty() {
        map.insert("#text".to_owned(), FieldValue::Text(text));
    }
    FieldValue::Map(map)
}

/// True when more than one child element of `node` is named `name`; keeps a
/// single child whose own value is a list from being mistaken for a group.
fn is_repeated(node: roxmltree::Node<'_, '_>, name: &str) -> bool {
    node.children()
        .filter(|c| c.is_element() && c.tag_name().name() == name)
        .count()
        > 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: Vec<(&str, FieldValue)>) -> FieldValue {
        FieldValue::Map(pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect())
    }

    #[test]
    fn json_maps_natively() {
        assert_eq!(
            parse_tree(br#"{"a":1}"#, TREE_JSON).unwrap(),
            map(vec![("a", FieldValue::Integer(1))])
        );
    }

    #[test]
    fn json_error_offset() {
        match parse_tree(br#"{"a":"#, TREE_JSON) {
            Err(CaptureError::Parse { offset, line, column, .. }) => {
                assert_eq!((offset, line, column), (5, 1, 6))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn xml_leaf_is_text() {
        assert_eq!(
            parse_tree(b"<strain><thc>12</thc></strain>", TREE_XML).unwrap(),
            map(vec![("strain", map(vec![("thc", FieldValue::text("12"))]))])
        );
    }

    #[test]
    fn xml_attributes_text_and_repeats() {
        let v = parse_tree(
            br#"<s id="7">note<t>1</t><t>2</t><t>3</t><u><v>x</v></u></s>"#,
            TREE_XML,
        )
        .unwrap();
        assert_eq!(
            v,
            map(vec![(
                "s",
                map(vec![
                    ("@id", FieldValue::text("7")),
                    ("#text", FieldValue::text("note")),
                    (
                        "t",
                        FieldValue::List(vec![
                            FieldValue::text("1"),
                            FieldValue::text("2"),
                            FieldValue::text("3")
                        ])
                    ),
                    ("u", map(vec![("v", FieldValue::text("x"))])),
                ])
            )])
        );
    }

    #[test]
    fn xml_error_has_position() {
        match parse_tree(b"<a>\n<b></a>", TREE_XML) {
            Err(CaptureError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
