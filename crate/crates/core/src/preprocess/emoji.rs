//! Emoji to `:name:` replacement table.
//!
//! Covers the common single-codepoint emoji plus a handful of variation-selector
//! sequences. Names follow the CLDR short names with spaces as underscores.

use std::sync::OnceLock;

const TABLE: &[(&str, &str)] = &[
    ("👍", "thumbs_up"),
    ("👎", "thumbs_down"),
    ("👏", "clapping_hands"),
    ("🙌", "raising_hands"),
    ("🙏", "folded_hands"),
    ("👌", "ok_hand"),
    ("✌️", "victory_hand"),
    ("✌", "victory_hand"),
    ("💪", "flexed_biceps"),
    ("👋", "waving_hand"),
    ("🤞", "crossed_fingers"),
    ("👀", "eyes"),
    ("😀", "grinning_face"),
    ("😃", "grinning_face_with_big_eyes"),
    ("😄", "grinning_face_with_smiling_eyes"),
    ("😁", "beaming_face_with_smiling_eyes"),
    ("😆", "grinning_squinting_face"),
    ("😅", "grinning_face_with_sweat"),
    ("🤣", "rolling_on_the_floor_laughing"),
    ("😂", "face_with_tears_of_joy"),
    ("🙂", "slightly_smiling_face"),
    ("😉", "winking_face"),
    ("😊", "smiling_face_with_smiling_eyes"),
    ("😇", "smiling_face_with_halo"),
    ("🥰", "smiling_face_with_hearts"),
    ("😍", "smiling_face_with_heart-eyes"),
    ("🤩", "star-struck"),
    ("😘", "face_blowing_a_kiss"),
    ("😋", "face_savoring_food"),
    ("😜", "winking_face_with_tongue"),
    ("🤪", "zany_face"),
    ("🤗", "hugging_face"),
    ("🤔", "thinking_face"),
    ("🤫", "shushing_face"),
    ("😐", "neutral_face"),
    ("😏", "smirking_face"),
    ("😒", "unamused_face"),
    ("🙄", "face_with_rolling_eyes"),
    ("😬", "grimacing_face"),
    ("😌", "relieved_face"),
    ("😔", "pensive_face"),
    ("😴", "sleeping_face"),
    ("🤤", "drooling_face"),
    ("😷", "face_with_medical_mask"),
    ("🤯", "exploding_head"),
    ("🥳", "partying_face"),
    ("😎", "smiling_face_with_sunglasses"),
    ("🤓", "nerd_face"),
    ("😕", "confused_face"),
    ("😮", "face_with_open_mouth"),
    ("😲", "astonished_face"),
    ("😳", "flushed_face"),
    ("🥺", "pleading_face"),
    ("😢", "crying_face"),
    ("😭", "loudly_crying_face"),
    ("😱", "face_screaming_in_fear"),
    ("😩", "weary_face"),
    ("😤", "face_with_steam_from_nose"),
    ("😡", "pouting_face"),
    ("😈", "smiling_face_with_horns"),
    ("💀", "skull"),
    ("🤡", "clown_face"),
    ("❤️", "red_heart"),
    ("❤", "red_heart"),
    ("🧡", "orange_heart"),
    ("💛", "yellow_heart"),
    ("💚", "green_heart"),
    ("💙", "blue_heart"),
    ("💜", "purple_heart"),
    ("🖤", "black_heart"),
    ("🤍", "white_heart"),
    ("💕", "two_hearts"),
    ("💖", "sparkling_heart"),
    ("💗", "growing_heart"),
    ("💔", "broken_heart"),
    ("💯", "hundred_points"),
    ("💥", "collision"),
    ("💫", "dizzy"),
    ("✨", "sparkles"),
    ("🔥", "fire"),
    ("⭐", "star"),
    ("🌟", "glowing_star"),
    ("☀️", "sun"),
    ("☀", "sun"),
    ("🌞", "sun_with_face"),
    ("🌈", "rainbow"),
    ("🌸", "cherry_blossom"),
    ("🌹", "rose"),
    ("🌿", "herb"),
    ("🌴", "palm_tree"),
    ("🍕", "pizza"),
    ("🍔", "hamburger"),
    ("🍰", "shortcake"),
    ("🍷", "wine_glass"),
    ("☕", "hot_beverage"),
    ("🍾", "bottle_with_popping_cork"),
    ("🎉", "party_popper"),
    ("🎁", "wrapped_gift"),
    ("🎄", "christmas_tree"),
    ("📸", "camera_with_flash"),
    ("📷", "camera"),
    ("💻", "laptop"),
    ("📱", "mobile_phone"),
    ("✈️", "airplane"),
    ("✈", "airplane"),
    ("🏖️", "beach_with_umbrella"),
    ("🏖", "beach_with_umbrella"),
    ("🏋️", "person_lifting_weights"),
    ("🏋", "person_lifting_weights"),
    ("💄", "lipstick"),
    ("💅", "nail_polish"),
    ("👗", "dress"),
    ("🛍️", "shopping_bags"),
    ("🛍", "shopping_bags"),
    ("💰", "money_bag"),
    ("👉", "backhand_index_pointing_right"),
    ("👇", "backhand_index_pointing_down"),
    ("✅", "check_mark_button"),
    ("❌", "cross_mark"),
    ("⚡", "high_voltage"),
];

fn sorted_table() -> &'static [(&'static str, &'static str)] {
    static SORTED: OnceLock<Vec<(&'static str, &'static str)>> = OnceLock::new();
    SORTED.get_or_init(|| {
        let mut t = TABLE.to_vec();
        // Longest sequence first so variation-selector forms win.
        t.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        t
    })
}

/// If `s` starts with a known emoji, return its name and byte length.
pub fn match_prefix(s: &str) -> Option<(&'static str, usize)> {
    sorted_table()
        .iter()
        .find(|(emoji, _)| s.starts_with(emoji))
        .map(|(emoji, name)| (*name, emoji.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thumbs_up() {
        assert_eq!(match_prefix("👍 yes"), Some(("thumbs_up", "👍".len())));
    }

    #[test]
    fn variation_selector_is_consumed() {
        let (name, len) = match_prefix("❤️x").unwrap();
        assert_eq!(name, "red_heart");
        assert_eq!(len, "❤️".len());
    }

    #[test]
    fn names_are_lowercase_and_space_free() {
        for (_, name) in TABLE {
            assert_eq!(*name, name.to_lowercase());
            assert!(!name.contains(' ') && !name.contains(':'));
        }
        assert!(TABLE.len() >= 100);
    }
}
