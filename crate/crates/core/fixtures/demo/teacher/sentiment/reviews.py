TEST = [
    ("r00", "A great cast and an excellent script. I loved every minute.", 1),
    ("r01", "Boring, slow and far too long. I fell asleep twice.", 0),
    ("r02", "The acting was wonderful and the ending genuinely moving.", 1),
    ("r03", "An awful mess with a terrible plot and worse dialogue.", 0),
    ("r04", "Good fun for the whole family, with a charming lead.", 1),
    ("r05", "I wanted to like it, but the story is predictable and dull.", 0),
    ("r06", "Beautiful photography and a brilliant score.", 1),
    ("r07", "Bad acting, bad writing, bad everything.", 0),
    ("r08", "A touching, funny and smart film. Highly recommended.", 1),
    ("r09", "The worst sequel I have seen in years. A waste of time.", 0),
    ("r10", "Not perfect, but the performances are superb.", 1),
    ("r11", "Stupid jokes and lazy direction ruin a decent idea.", 0),
    ("r12", "A masterpiece of quiet drama. I was moved to tears.", 1),
    ("r13", "Poorly edited and painfully boring from start to finish.", 0),
    ("r14", "Delightful and clever, with a great soundtrack.", 1),
    ("r15", "The plot makes no sense and the characters are flat.", 0),
    ("r16", "An enjoyable thriller that kept me guessing.", 1),
    ("r17", "Terrible pacing; the good moments cannot save it.", 0),
    ("r18", "Fantastic effects and a surprisingly warm heart.", 1),
    ("r19", "Forgettable, bland and overlong.", 0),
    ("r20", "I loved the chemistry between the two leads.", 1),
    ("r21", "Awful. Just awful. Avoid.", 0),
    ("r22", "A fresh, funny script and excellent timing.", 1),
    ("r23", "Dull characters in a pointless, unfunny comedy.", 0),
]
