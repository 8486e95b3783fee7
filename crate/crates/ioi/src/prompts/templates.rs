// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt templates, stored in BABA form (subject name first).
//!
//! Slots: `[A]` = indirect object name, `[B]` = subject name, plus
//! `[PLACE]` and `[OBJECT]`. The final `[A]` is the answer and is
//! stripped when rendering a prompt. The ABBA form swaps the leading
//! `[B] and [A]` pair.

pub const BASE_IOI_BABA: &[&str] = &[
    "Then, [B] and [A] went to the [PLACE]. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] had a lot of fun at the [PLACE]. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] were working at the [PLACE]. [B] decided to give a [OBJECT] to [A]",
    "Then, [B] and [A] were thinking about going to the [PLACE]. [B] wanted to give a [OBJECT] to [A]",
    "Then, [B] and [A] had a long argument, and afterwards [B] said to [A]",
    "After [B] and [A] went to the [PLACE], [B] gave a [OBJECT] to [A]",
    "When [B] and [A] got a [OBJECT] at the [PLACE], [B] decided to give it to [A]",
    "When [B] and [A] got a [OBJECT] at the [PLACE], [B] decided to give the [OBJECT] to [A]",
    "While [B] and [A] were working at the [PLACE], [B] gave a [OBJECT] to [A]",
    "While [B] and [A] were commuting to the [PLACE], [B] gave a [OBJECT] to [A]",
    "After the lunch, [B] and [A] went to the [PLACE]. [B] gave a [OBJECT] to [A]",
    "Afterwards, [B] and [A] went to the [PLACE]. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] had a long argument. Afterwards [B] said to [A]",
    "The [PLACE] [B] and [A] went to had a [OBJECT]. [B] gave it to [A]",
    "Friends [B] and [A] found a [OBJECT] at the [PLACE]. [B] gave it to [A]",
];

pub const DOUBLE_IO_BABA: &[&str] = &[
    "Then, [B] and [A] went to the [PLACE], [A] was happy. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] had a lot of fun at the [PLACE], [A] seemed distracted. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] were working at the [PLACE], [A] was confused. [B] decided to give a [OBJECT] to [A]",
    "Then, [B] and [A] were thinking about going to the [PLACE], [A] was excited. [B] wanted to give a [OBJECT] to [A]",
    "Then, [B] and [A] had a long argument, and afterwards [A] smiled. [B] said to [A]",
    "After [B] and [A] went to the [PLACE], [A] looked tired. [B] gave a [OBJECT] to [A]",
    "When [B] and [A] got a [OBJECT] at the [PLACE], [A] laughed. [B] decided to give it to [A]",
    "When [B] and [A] got a [OBJECT] at the [PLACE], [A] was deep in thought. [B] decided to give the [OBJECT] to [A]",
    "While [B] and [A] were working at the [PLACE], [A] was happy. [B] gave a [OBJECT] to [A]",
    "While [B] and [A] were commuting to the [PLACE], [A] seemed distracted. [B] gave a [OBJECT] to [A]",
    "After the lunch, [B] and [A] went to the [PLACE], [A] was confused. [B] gave a [OBJECT] to [A]",
    "Afterwards, [B] and [A] went to the [PLACE], [A] was excited. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] had a long argument, [A] smiled. Afterwards, [B] said to [A]",
    "The [PLACE] [B] and [A] went to had a [OBJECT], [A] looked tired. [B] gave it to [A]",
    "Friends [B] and [A] found a [OBJECT] at the [PLACE], [A] laughed. [B] gave it to [A]",
];

pub const TRIPLE_IO_BABA: &[&str] = &[
    "Then, [B] and [A] went to the [PLACE], [A] sat on a bench. [A] had left their [OBJECT] behind. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] had a lot of fun at the [PLACE], [A] seemed lost in thought. [A] looked up at the sky. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] were working at the [PLACE], [A] was laughing softly. [A] glanced at the [OBJECT]. [B] decided to give a [OBJECT] to [A]",
    "Then, [B] and [A] were thinking about going to the [PLACE], [A] appeared confused. [A] fumbled with their [OBJECT]. [B] wanted to give a [OBJECT] to [A]",
    "Then, [B] and [A] had a long argument, and afterwards [A] smiled. [A] adjusted their [OBJECT]. [B] said to [A]",
    "After [B] and [A] went to the [PLACE], [A] yawned. [A] rubbed their eyes. [B] gave a [OBJECT] to [A]",
    "When [B] and [A] got a [OBJECT] at the [PLACE]. [A] looked at the ground, [A] sighed deeply. [B] decided to give it to [A]",
    "When [B] and [A] got a [OBJECT] at the [PLACE], [A] smiled at the view. [A] seemed relieved. [B] decided to give the [OBJECT] to [A]",
    "While [B] and [A] were working at the [PLACE], [A] sat on a bench. [A] had left their [OBJECT] behind. [B] gave a [OBJECT] to [A]",
    "While [B] and [A] were commuting to the [PLACE], [A] seemed lost in thought. [A] looked up at the sky. [B] gave a [OBJECT] to [A]",
    "After the lunch, [B] and [A] went to the [PLACE], [A] was laughing softly. [A] glanced at the [OBJECT]. [B] gave a [OBJECT] to [A]",
    "Afterwards, [B] and [A] went to the [PLACE], [A] appeared confused. [A] fumbled with their [OBJECT]. [B] gave a [OBJECT] to [A]",
    "Then, [B] and [A] had a long argument, [A] smiled. [A] adjusted their [OBJECT]. [B] said to [A]",
    "The [PLACE] [B] and [A] went to had a [OBJECT], [A] yawned. [A] rubbed their eyes. [B] gave it to [A]",
    "Friends [B] and [A] found a [OBJECT] at the [PLACE], [A] looked at the ground. [A] sighed deeply. [B] gave it to [A]",
];
