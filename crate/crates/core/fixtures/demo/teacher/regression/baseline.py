from data import make_split

LEARNING_RATE = 0.01
EPOCHS = 3


def train(rows):
    w = [0.0] * len(rows[0][0])
    b = 0.0
    for _ in range(EPOCHS):
        for x, y in rows:
            err = sum(wi * xi for wi, xi in zip(w, x)) + b - y
            w = [wi - LEARNING_RATE * err * xi for wi, xi in zip(w, x)]
            b -= LEARNING_RATE * err
    return w, b


def main():
    w, b = train(make_split(0, 200))
    with open("model.yaml", "w") as f:
        f.write("weights: [" + ", ".join(repr(v) for v in w) + "]\n")
        f.write(f"bias: {b!r}\n")
    print(f"trained for {EPOCHS} epochs; saved model.yaml")


if __name__ == "__main__":
    main()
