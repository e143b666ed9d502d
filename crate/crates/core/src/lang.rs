//! Display names for language tags used in prompt text.

/// Maps a BCP-47-style tag to the display name used inside prompts.
///
/// Only the primary subtag is considered, so `zh-CN` and `zh` both map to
/// "Chinese". Unknown tags are passed through verbatim rather than rejected;
/// prompts stay renderable for any language pair.
pub fn display_language(tag: &str) -> String {
    let primary = tag.split('-').next().unwrap_or(tag);
    let name = match primary.to_ascii_lowercase().as_str() {
        "en" => "English",
        "zh" => "Chinese",
        "de" => "German",
        "fr" => "French",
        "es" => "Spanish",
        "ja" => "Japanese",
        "ko" => "Korean",
        "ru" => "Russian",
        "pt" => "Portuguese",
        "it" => "Italian",
        "ar" => "Arabic",
        "nl" => "Dutch",
        _ => return tag.to_string(),
    };
    name.to_string()
}
